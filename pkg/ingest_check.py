import argparse
import logging
import os
import sys

from data_utils import IngestError, ingest_correspondences, ingest_tracks, save_problem
from models import DEFAULT_EPSILON, make_problem

logger = logging.getLogger("maxcon")


def ingest(path, family):
    """Correspondence CSV for homography/fundamental, track JSON for triangulation."""
    if family == "triangulation":
        return ingest_tracks(path)
    if family in ("homography", "fundamental"):
        return ingest_correspondences(path)
    raise ValueError("ingestion supports homography, fundamental and triangulation, got '{}'".format(family))


def main(args):
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(asctime)s\t%(name)s\t%(levelname)s\t%(message)s")
    family = args.family
    if family is None:
        family = "triangulation" if args.input.endswith(".json") else "homography"
    try:
        data = ingest(args.input, family)
        problem = make_problem(family, data, args.epsilon)
    except (OSError, IngestError, ValueError) as err:
        logger.error("%s: %s", args.input, err)
        return 1

    kind = "views" if family == "triangulation" else "correspondences"
    print("{}: {} {} ({} instance, epsilon {:g})".format(
        args.input, len(data), kind, family, problem.instance.epsilon))
    if args.out:
        save_problem(args.out, problem, meta={"source": os.path.abspath(args.input)})
        logger.info("wrote %s", args.out)
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument('-i', '--input', type=str, required=True, help='Correspondence CSV or track JSON')
    parser.add_argument('-f', '--family', type=str, default=None,
                        help='homography | fundamental | triangulation')
    parser.add_argument('--epsilon', type=float, default=None,
                        help='Inlier threshold (defaults: {})'.format(DEFAULT_EPSILON))
    parser.add_argument('--out', type=str, default=None, help='Write an instance file for fit.py')
    args = parser.parse_args()
    sys.exit(main(args))

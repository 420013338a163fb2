import argparse
import os
import sys

import utils
from data_utils import ground_truth_path, save_ground_truth, save_problem
from synthetic import generate_problem, make_config


def data_settings(hps):
    if "data" not in hps:
        raise ValueError("config has no 'data' section")
    settings = hps.data.to_dict()
    if "family" not in settings:
        raise ValueError("config data section names no family")
    return settings.pop("family"), settings


def main(args):
    out_dir = args.output_dir
    logger = utils.get_logger(out_dir, "generate.log")
    try:
        hps = utils.get_hparams_from_file(args.config)
        utils.override(hps, "data", "eta", args.eta)
        utils.override(hps, "data", "seed", args.seed)
        utils.override(hps, "data", "epsilon", args.epsilon)
        tag, settings = data_settings(hps)
        cfg = make_config(tag, **settings)
        problem, gt = generate_problem(tag, cfg)
    except (OSError, ValueError) as err:
        logger.error("%s", err)
        return 1

    name = args.name or "{}_eta{:g}_seed{}".format(tag, cfg.eta, cfg.seed)
    instance_path = os.path.join(out_dir, name + ".json")
    save_problem(instance_path, problem, meta={"generator": dict(cfg.__dict__)})
    save_ground_truth(ground_truth_path(instance_path), gt)
    utils.save_hparams(hps, out_dir)
    logger.info("wrote %s (%d data, %d planted inliers)", instance_path, problem.instance.size,
                int(gt.inlier_mask_true.sum()))
    print(instance_path)
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    utils.add_config_argument(parser, "./configs/regression.json")
    parser.add_argument('-o', '--output_dir', type=str, required=True, help='Directory to save instances')
    parser.add_argument('-n', '--name', type=str, default=None, help='Instance file stem')
    parser.add_argument('--eta', type=float, default=None, help='Outlier percentage')
    parser.add_argument('--seed', type=int, default=None)
    parser.add_argument('--epsilon', type=float, default=None)
    args = parser.parse_args()
    sys.exit(main(args))

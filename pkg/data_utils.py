"""File formats.

Correspondences: CSV with four columns u_x,u_y,v_x,v_y, an optional header
line, blank lines and '#' comments ignored.

Tracks: JSON {"schema_version": 1, "views": [{"camera": 3x4, "point": [x, y]}]}.

Instances: JSON written by `save_problem` (see schemas/instance.schema.json)
with the raw data, family, epsilon, domain margin and, for fundamental
matrices, the normalizing transforms. Ground truth sits next to the instance
as <stem>.gt.json.
"""
import csv
import json
import logging
import os

import numpy as np

from models import Correspondence, ViewObservation, as_correspondence_array, make_problem
from synthetic import GroundTruth

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class IngestError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = "line {}: {}".format(line, message)
        super().__init__(message)


class EmptyInputError(IngestError):
    pass


def _is_number(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def ingest_correspondences(path):
    corrs = []
    header_done = False
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            cells = [c.strip() for c in row]
            if not cells or all(c == "" for c in cells) or cells[0].startswith("#"):
                continue
            if not header_done:
                header_done = True
                if not all(_is_number(c) for c in cells):
                    continue  # header
            if len(cells) != 4:
                raise IngestError("expected 4 columns, found {}".format(len(cells)), lineno)
            try:
                vals = [float(c) for c in cells]
                corrs.append(Correspondence(vals[:2], vals[2:]))
            except ValueError as err:
                raise IngestError(str(err), lineno) from err
    if not corrs:
        raise EmptyInputError("no correspondences in {}".format(path))
    return corrs


def ingest_tracks(path):
    with open(path) as f:
        text = f.read()
    if not text.strip():
        raise EmptyInputError("no views in {}".format(path))
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise IngestError(err.msg, err.lineno) from err
    _check_version(doc, path)
    views = []
    for k, item in enumerate(doc.get("views", [])):
        try:
            views.append(ViewObservation(item["camera"], item["point"]))
        except (KeyError, TypeError, ValueError) as err:
            raise IngestError("view {}: {}".format(k, err)) from err
    if not views:
        raise EmptyInputError("no views in {}".format(path))
    return views


def _check_version(doc, path):
    version = doc.get("schema_version") if isinstance(doc, dict) else None
    if version != SCHEMA_VERSION:
        raise IngestError("{}: unsupported schema_version {!r}, expected {}".format(
            path, version, SCHEMA_VERSION))


def _raw_to_json(tag, raw):
    if tag == "triangulation":
        return [{"camera": np.asarray(v.camera).tolist(), "point": list(v.point2d)} for v in raw]
    if tag == "regression":
        return np.asarray(raw).tolist()
    return as_correspondence_array(raw).tolist()


def _raw_from_json(tag, data):
    if tag == "triangulation":
        return [ViewObservation(item["camera"], item["point"]) for item in data]
    return np.asarray(data, dtype=np.float64)


def save_problem(path, problem, meta=None):
    inst = problem.instance
    doc = {
        "schema_version": SCHEMA_VERSION,
        "family": problem.family.tag,
        "dimension": problem.family.dimension,
        "epsilon": inst.epsilon,
        "domain_margin": inst.domain_margin,
        "data": _raw_to_json(problem.family.tag, problem.raw),
        "transforms": None,
        "meta": dict(meta or {}),
    }
    if problem.transforms is not None:
        doc["transforms"] = [np.asarray(T).tolist() for T in problem.transforms]
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(doc, f)


def load_problem(path, epsilon=None):
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as err:
            raise IngestError(err.msg, err.lineno) from err
    _check_version(doc, path)
    try:
        tag = doc["family"]
        eps = doc["epsilon"] if epsilon is None else epsilon
        raw = _raw_from_json(tag, doc["data"])
        transforms = doc.get("transforms")
        return make_problem(tag, raw, eps, doc.get("dimension"), transforms, doc.get("domain_margin"))
    except (KeyError, TypeError) as err:
        raise IngestError("{}: malformed instance ({})".format(path, err)) from err


def ground_truth_path(instance_path):
    stem, _ = os.path.splitext(instance_path)
    return stem + ".gt.json"


def save_ground_truth(path, gt):
    with open(path, "w") as f:
        json.dump({"schema_version": SCHEMA_VERSION,
                   "x_true": np.asarray(gt.x_true).tolist(),
                   "inlier_mask_true": np.asarray(gt.inlier_mask_true).astype(bool).tolist()}, f)


def load_ground_truth(path):
    with open(path) as f:
        doc = json.load(f)
    _check_version(doc, path)
    return GroundTruth(doc["x_true"], doc["inlier_mask_true"])

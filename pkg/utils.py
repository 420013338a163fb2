import os
import sys
import logging
import json
import subprocess

logger = logging.getLogger(__name__)

ENV_THREADS = "MAXCON_THREADS"


def summarize(writer, global_step, scalars={}, histograms={}):
    for k, v in scalars.items():
        writer.add_scalar(k, v, global_step)
    for k, v in histograms.items():
        writer.add_histogram(k, v, global_step)


def get_summary_writer(log_dir):
    # torch is only needed when traces are written
    from torch.utils.tensorboard import SummaryWriter
    return SummaryWriter(log_dir=log_dir)


def write_traces(writer, trace, prefix="ibco"):
    """Bisection bounds per step and BCO objective/consensus per half-step."""
    bco_step = 0
    for k, step in enumerate(trace.steps):
        summarize(writer, k, scalars={
            "{}/delta_l".format(prefix): step.delta_l,
            "{}/delta_h".format(prefix): step.delta_h,
            "{}/delta".format(prefix): step.delta,
            "{}/achieved".format(prefix): step.achieved,
        })
        for record in step.bco_trace:
            summarize(writer, bco_step, scalars={
                "bco/objective": record["objective"],
                "bco/consensus": record["consensus"],
            })
            bco_step += 1
    writer.flush()


def num_workers():
    value = os.environ.get(ENV_THREADS)
    if value:
        try:
            n = int(value)
        except ValueError:
            raise ValueError("{} must be an integer, got {!r}".format(ENV_THREADS, value))
        if n < 1:
            raise ValueError("{} must be positive, got {}".format(ENV_THREADS, n))
        return n
    return os.cpu_count() or 1


def load_config_text(config_path):
    with open(config_path, "r") as f:
        return f.read()


def get_hparams_from_file(config_path):
    try:
        sections = json.loads(load_config_text(config_path))
    except json.JSONDecodeError as err:
        raise ValueError("{}: invalid JSON ({})".format(config_path, err)) from err
    if not isinstance(sections, dict):
        raise ValueError("{}: top level must be an object".format(config_path))
    return HParams(**sections)


def save_hparams(hparams, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "config.json")
    with open(path, "w") as f:
        json.dump(hparams.to_dict(), f, indent=2)
    return path


def add_config_argument(parser, default):
    parser.add_argument('-c', '--config', type=str, default=default,
                        help='JSON file for configuration')


def override(hparams, section, key, value):
    """Command-line value wins over the config file when given."""
    if value is None:
        return
    if section not in hparams:
        hparams[section] = HParams()
    hparams[section][key] = value


def _source_revision():
    source_dir = os.path.dirname(os.path.realpath(__file__))
    if not os.path.isdir(os.path.join(source_dir, ".git")):
        return None
    out = subprocess.run(["git", "-C", source_dir, "rev-parse", "HEAD"],
                         capture_output=True, text=True)
    return out.stdout.strip() if out.returncode == 0 else None


def check_git_hash(out_dir):
    """Pin the source revision in <out_dir>/githash; warn when a rerun uses another one."""
    revision = _source_revision()
    if revision is None:
        logger.warning("source tree is not under git, runs in %s are not pinned to a revision", out_dir)
        return
    path = os.path.join(out_dir, "githash")
    if not os.path.exists(path):
        with open(path, "w") as f:
            f.write(revision)
        return
    with open(path) as f:
        pinned = f.read().strip()
    if pinned != revision:
        logger.warning("%s was produced by revision %s, running %s", out_dir, pinned[:8], revision[:8])


def get_logger(out_dir, filename="run.log", name="maxcon"):
    """Logger writing to <out_dir>/<filename> and to stderr; stdout stays free for records.

    The handlers sit on the root logger so library modules, which log under
    their own names, end up in the same file.
    """
    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)

    formatter = logging.Formatter("%(asctime)s\t%(name)s\t%(levelname)s\t%(message)s")
    if not os.path.exists(out_dir):
        os.makedirs(out_dir)
    root = logging.getLogger()
    for h in list(root.handlers):
        if getattr(h, "_maxcon", False):
            root.removeHandler(h)
            h.close()
    h = logging.FileHandler(os.path.join(out_dir, filename))
    h.setLevel(logging.DEBUG)
    s = logging.StreamHandler(sys.stderr)
    s.setLevel(logging.INFO)
    for handler in (h, s):
        handler.setFormatter(formatter)
        handler._maxcon = True
        root.addHandler(handler)
    root.setLevel(logging.INFO)
    return logger


class HParams:
    """Attribute access over nested config sections; dicts become HParams."""

    def __init__(self, **sections):
        for key, value in sections.items():
            self[key] = HParams(**value) if isinstance(value, dict) else value

    def keys(self):
        return vars(self).keys()

    def items(self):
        return vars(self).items()

    def values(self):
        return vars(self).values()

    def get(self, key, default=None):
        return vars(self).get(key, default)

    def to_dict(self):
        return {key: value.to_dict() if isinstance(value, HParams) else value
                for key, value in self.items()}

    def __len__(self):
        return len(vars(self))

    def __getitem__(self, key):
        return getattr(self, key)

    def __setitem__(self, key, value):
        setattr(self, key, value)

    def __contains__(self, key):
        return key in vars(self)

    def __repr__(self):
        return "HParams({})".format(self.to_dict())


def parse_float_list(text):
    """'1,2.5,3' -> [1.0, 2.5, 3.0]"""
    if text is None:
        return None
    return [float(v) for v in text.replace(" ", "").split(",") if v]


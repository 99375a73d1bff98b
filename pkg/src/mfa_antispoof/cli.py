"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O
error, 3 verification failure.
"""
import argparse
import dataclasses
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import datastore, gradcheck, metrics, synthgen
from .frontend import AudioFormatError, PreprocConfig, ToyEncoder, ToyEncoderConfig, preprocess, read_wav
from .mfa import ClassifierKind, params_from_tensors, params_to_tensors
from .numkernel import ShapeError
from .trainer import TrainConfig, predict_scores, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3

SECTIONS = {
    "train": TrainConfig,
    "encoder": ToyEncoderConfig,
    "preproc": PreprocConfig,
    "synth": synthgen.SynthConfig,
    "tdcf": metrics.TdcfCostModel,
}
HEADS = {"mfa": ClassifierKind.MFA, "gap": ClassifierKind.GAP, "tnfc": ClassifierKind.TN_FC}


class UsageError(Exception):
    pass


class ConfigError(Exception):
    pass


# ------------------------------------------------------------- config


def _convert(cls, name, text):
    field = {f.name: f for f in dataclasses.fields(cls)}[name]
    default = field.default
    kind = type(default) if default is not dataclasses.MISSING and default is not None else None
    if kind is None:
        kind = float if field.type in (float, "float") else int
    try:
        if kind is tuple:
            return tuple(float(x) for x in text.split(","))
        if kind is bool:
            return text.lower() in ("1", "true", "yes")
        if kind is int:
            return int(text, 0)
        return kind(text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def parse_kv(text, source="<config>"):
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


class RunConfig:
    """Dotted ``section.field`` settings from a file plus ``--set`` overrides."""

    def __init__(self, values=None):
        self.values = {}
        for key, value in (values or {}).items():
            self.set(key, value)

    def set(self, key, value):
        section, _, name = key.partition(".")
        cls = SECTIONS.get(section)
        if cls is None or name not in {f.name for f in dataclasses.fields(cls)}:
            raise ConfigError(f"unknown config key {key!r}")
        self.values.setdefault(section, {})[name] = _convert(cls, name, value)

    @classmethod
    def load(cls, path=None, overrides=()):
        cfg = cls()
        if path is not None:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
            for key, value in parse_kv(text, str(path)).items():
                cfg.set(key, value)
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            key, value = item.split("=", 1)
            cfg.set(key.strip(), value.strip())
        return cfg

    def build(self, section):
        try:
            return SECTIONS[section](**self.values.get(section, {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid {section} config: {exc}") from None


def load_cost_model(path):
    try:
        raw = parse_kv(Path(path).read_text(encoding="utf-8"), str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read cost model {path}: {exc}") from None
    cfg = RunConfig()
    for key, value in raw.items():
        cfg.set(key if key.startswith("tdcf.") else f"tdcf.{key}", value)
    return cfg.build("tdcf")


# --------------------------------------------------------------- data


def _pool_threads():
    value = os.environ.get("MFA_POOL_THREADS")
    if not value:
        return None
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"MFA_POOL_THREADS must be an integer, got {value!r}") from None
    if n < 1:
        raise ConfigError("MFA_POOL_THREADS must be >= 1")
    return n


def load_dataset(manifest_path, data_dir):
    """Read every LEB named in a manifest; returns ``(entries, X, y)``."""
    entries = datastore.read_manifest(manifest_path)
    if not entries:
        raise ValueError(f"manifest {manifest_path} is empty")
    data_dir = Path(data_dir)
    with ThreadPoolExecutor(max_workers=_pool_threads()) as pool:
        arrays = list(pool.map(lambda e: datastore.read_leb(data_dir / e.path), entries))
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ShapeError(f"embedding files disagree on shape: {sorted(shapes)}")
    y = np.array([e.target for e in entries], dtype=np.int64)
    return entries, np.stack(arrays), y


def _sibling(path, tag):
    path = Path(path)
    return path.with_name(f"{path.stem}.{tag}{path.suffix}")


# ----------------------------------------------------------- commands


def cmd_synth(args):
    cfg = RunConfig.load(args.config, args.set).build("synth")
    entries = synthgen.generate(cfg, args.out)
    print(f"wrote {len(entries)} utterances to {args.out}")
    return EXIT_OK


def cmd_extract(args):
    run = RunConfig.load(args.config, args.set)
    pre, enc = run.build("preproc"), run.build("encoder")
    wavs = sorted(Path(args.wav_dir).glob("*.wav"))
    if not wavs:
        raise FileNotFoundError(f"no .wav files in {args.wav_dir}")
    encoder = ToyEncoder(enc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for wav in wavs:
        emb = encoder.encode(preprocess(read_wav(wav), pre))
        datastore.write_leb(emb, out / f"{wav.stem}.leb")
    print(f"encoded {len(wavs)} files to {out}")
    return EXIT_OK


def cmd_train(args):
    cfg = RunConfig.load(args.config, args.set).build("train")
    _, X, y = load_dataset(args.manifest, args.data)
    result = train(X, y, cfg, HEADS[args.head])
    out = Path(args.out)
    datastore.save_checkpoint(params_to_tensors(result.params), out)
    datastore.save_checkpoint(params_to_tensors(result.best_params), _sibling(out, "best"))
    out.with_name(f"{out.stem}.log.tsv").write_text(result.log_text(), encoding="utf-8")
    last = result.log[-1] if result.log else (0, cfg.lr0, float("nan"))
    print(f"trained {args.head} for {len(result.log)} steps, final loss {last[2]:.6f}")
    return EXIT_OK


def cmd_score(args):
    params = params_from_tensors(datastore.load_checkpoint(args.ckpt))
    entries, X, _ = load_dataset(args.manifest, args.data)
    scores = predict_scores(X, params)
    Path(args.out).write_text(
        datastore.write_scores((e.utt_id, s) for e, s in zip(entries, scores)), encoding="utf-8")
    return EXIT_OK


def cmd_eval(args):
    cost = load_cost_model(args.tdcf) if args.tdcf else None
    records = datastore.read_scores(Path(args.scores).read_text(encoding="utf-8"))
    labels = {e.utt_id: e.label for e in datastore.read_manifest(args.labels)}
    missing = [u for u, _ in records if u not in labels]
    if missing:
        raise KeyError(f"{len(missing)} scored utterances have no label, e.g. {missing[0]!r}")
    scores = [s for _, s in records]
    report = metrics.evaluate(scores, [labels[u] for u, _ in records], cost)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_gradcheck(args):
    results = gradcheck.run_all(args.trials, args.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


# -------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    parser = _Parser(prog="mfa-cm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        p = sub.add_parser(name, help=help, description=help)
        p.set_defaults(func=fn)
        return p

    def config_flags(p, required=False):
        p.add_argument("--config", required=required, help="key=value run configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable), e.g. train.lr0=0.001")

    p = add("synth", cmd_synth, "generate a synthetic layered-embedding dataset")
    config_flags(p)
    p.add_argument("--out", required=True, help="output directory")

    p = add("extract", cmd_extract, "pre-process and toy-encode a directory of 16 kHz WAV files")
    p.add_argument("--wav-dir", required=True)
    p.add_argument("--out", required=True, help="output directory for .leb files")
    config_flags(p)

    p = add("train", cmd_train, "train a classifier; writes CKPT, its .best twin and a .log.tsv")
    p.add_argument("--manifest", required=True)
    p.add_argument("--data", required=True, help="directory the manifest paths are relative to")
    config_flags(p)
    p.add_argument("--head", choices=sorted(HEADS), default="mfa")
    p.add_argument("--out", required=True, help="checkpoint path")

    p = add("score", cmd_score, "write one CM score per manifest utterance")
    p.add_argument("--manifest", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="score file path")

    p = add("eval", cmd_eval, "print EER (and min t-DCF given a cost model)")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", required=True, help="manifest providing the labels")
    p.add_argument("--tdcf", metavar="COSTFILE", help="key=value cost model incl. ASV operating point")

    p = add("gradcheck", cmd_gradcheck, "finite-difference check of all backward passes")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # --help
        return exc.code or 0
    except (UsageError, ConfigError, metrics.DegenerateCostModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, datastore.FormatError, AudioFormatError, ShapeError, KeyError,
            metrics.MetricError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``trendvote {ingest,predict,sweep,eval,synth}``.

Runs are driven by an INI config; any ``section.key`` value can be overridden
with ``--section.key VALUE``. Exit codes: 0 ok, 1 usage, 2 data/config
validation, 3 run aborted.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import replace
from datetime import date
from importlib import resources
from pathlib import Path
from typing import Sequence

from trendvote.backends import CachedBackend, LexiconBackend, RemoteBackend
from trendvote.backends.remote import DEFAULT_ENDPOINT, DEFAULT_KEY_ENV, DEFAULT_MODEL
from trendvote.corpus import (
    SPLIT_NAMES,
    DatasetSplit,
    build_instances,
    ingest_news,
    ingest_prices,
    parse_date,
    split_dataset,
)
from trendvote.errors import BackendError, ConfigError, DataValidationError, RunAborted
from trendvote.evaluation import (
    RunResult,
    compare_predictions,
    confusion,
    evaluate_predictions,
    format_table,
    metrics,
    report,
)
from trendvote.labels import TrendLabel
from trendvote.pipeline import (
    DEFAULT_LAMBDA_GRID,
    Method,
    MethodConfig,
    build_context,
    read_predictions,
    revote,
    run_method,
    sweep_lambda,
    write_predictions,
)
from trendvote.prompting import InputVariant, load_exemplars, load_template
from trendvote.synthlab import OracleBackend, SynthConfig, generate

logger = logging.getLogger("trendvote")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ABORTED = 0, 1, 2, 3

DEFAULTS = {
    "data": {},
    "splits": {},
    "method": {
        "kind": "dtv",
        "shots": "3",
        "lambda": "0.5",
        "max_news": "60",
        "variant": "title",
        "fallback": "Up",
        "token_budget": "4097",
        "seed": "0",
        "temperature": "0",
        "error_policy": "abort",
        "workers": "1",
    },
    "backend": {
        "kind": "lexicon",
        "model": DEFAULT_MODEL,
        "endpoint": DEFAULT_ENDPOINT,
        "api_key_env": DEFAULT_KEY_ENV,
        "max_attempts": "5",
        "max_in_flight": "4",
        "rpm": "0",
        "timeout": "60",
        "relevance_error": "0",
        "direction_error": "0",
        "oracle_seed": "0",
    },
    "cache": {},
    "output": {"dir": "out"},
    "sweep": {
        "lambda_grid": ",".join(f"{x:.2f}" for x in DEFAULT_LAMBDA_GRID),
        "shots": "0,3,6,9,12",
        "news_counts": "10,20,30,40,60,80",
        "variants": "title,article-first-100,article-middle-100,article-last-100,article-summary-100",
    },
    "report": {"positive_class": "Up"},
    "synth": {
        "n_days": "250",
        "items_per_day": "20",
        "relevance_rate": "0.5",
        "direction_accuracy": "0.8",
        "noise_direction_bias": "0.5",
        "seed": "0",
        "start_date": "2020-01-01",
    },
}

# named flags and the config keys they set
FLAG_KEYS = {
    "method": "method.kind",
    "lambda": "method.lambda",
    "shots": "method.shots",
    "max_news": "method.max_news",
    "variant": "method.variant",
    "backend": "backend.kind",
    "cache": "cache.path",
    "seed": "method.seed",
    "out": "output.dir",
}

PATH_KEYS = {
    ("data", "news"),
    ("data", "prices"),
    ("data", "template"),
    ("data", "exemplars_standard"),
    ("data", "exemplars_voting"),
    ("data", "exemplars_dtv"),
    ("backend", "lexicon"),
    ("backend", "truth"),
    ("cache", "path"),
    ("output", "dir"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class RunConfig:
    """Config sections after defaults, file values and overrides are merged."""

    def __init__(self, parser: configparser.ConfigParser, base_dir: Path):
        self.cp = parser
        self.base_dir = base_dir

    @classmethod
    def load(cls, path: str | None, overrides: dict[str, str]) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_dict(DEFAULTS)
        base = Path.cwd()
        if path:
            p = Path(path)
            if not p.is_file():
                raise DataValidationError(f"config file not found: {p}")
            cp.read(p, encoding="utf-8")
            base = p.resolve().parent
        for dotted, value in overrides.items():
            section, _, key = dotted.partition(".")
            if not key:
                raise UsageError(f"override {dotted!r} is not of the form section.key")
            if not cp.has_section(section):
                cp.add_section(section)
            cp.set(section, key, value)
        return cls(cp, base)

    def get(self, section: str, key: str, default: str | None = None) -> str | None:
        value = self.cp.get(section, key, fallback=default)
        if value is not None and (section, key) in PATH_KEYS and value != "":
            return str((self.base_dir / value).resolve()) if not Path(value).is_absolute() else value
        return value

    def require(self, section: str, key: str) -> str:
        value = self.get(section, key)
        if not value:
            raise ConfigError(f"config value {section}.{key} is required")
        return value

    def number(self, section: str, key: str, cast=float):
        raw = self.get(section, key)
        try:
            return cast(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from exc

    def floats(self, section: str, key: str) -> list[float]:
        return [float(x) for x in self.require(section, key).split(",") if x.strip()]

    def ints(self, section: str, key: str) -> list[int]:
        return [int(x) for x in self.require(section, key).split(",") if x.strip()]

    def method_config(self) -> MethodConfig:
        try:
            kind = Method(self.require("method", "kind").lower())
            variant = InputVariant.parse(self.require("method", "variant"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return MethodConfig(
            kind=kind,
            shots_per_class=self.number("method", "shots", int),
            lam=self.number("method", "lambda"),
            max_news=self.number("method", "max_news", int),
            input_variant=variant,
            fallback=TrendLabel(self.require("method", "fallback").capitalize()),
            token_budget=self.number("method", "token_budget", int),
            seed=self.number("method", "seed", int),
            temperature=self.number("method", "temperature"),
            error_policy=self.require("method", "error_policy"),
        )

    def spans(self) -> dict[str, tuple[date, date]]:
        spans = {}
        for name in SPLIT_NAMES:
            raw = self.require("splits", name)
            start, sep, end = raw.partition("..")
            if not sep:
                raise ConfigError(f"splits.{name} must look like YYYY-MM-DD..YYYY-MM-DD")
            try:
                spans[name] = (parse_date(start), parse_date(end))
            except ValueError as exc:
                raise ConfigError(f"splits.{name}: {exc}") from exc
        return spans

    def out_dir(self) -> Path:
        out = Path(self.require("output", "dir"))
        out.mkdir(parents=True, exist_ok=True)
        return out


# ---------------------------------------------------------------------------
# helpers


def load_splits(cfg: RunConfig) -> tuple[dict[str, DatasetSplit], int]:
    news_path, price_path = cfg.require("data", "news"), cfg.require("data", "prices")
    for p in (news_path, price_path):
        if not Path(p).is_file():
            raise DataValidationError(f"data file not found: {p}")
    news = ingest_news(news_path)
    prices = ingest_prices(price_path)
    instances = build_instances(news, prices, ticker=cfg.get("data", "ticker") or None)
    dropped = max(len(prices) - 1, 0) - len(instances)
    return split_dataset(instances, cfg.spans()), dropped


def make_backend(cfg: RunConfig):
    kind = cfg.require("backend", "kind").lower()
    model = cfg.require("backend", "model")
    cache_path = cfg.get("cache", "path")
    if kind == "replay":
        if not cache_path:
            raise ConfigError("replay backend needs cache.path")
        return CachedBackend(None, cache_path, model_id=model)
    if kind == "oracle":
        if cache_path:
            logger.warning("cache.path is ignored for the oracle backend")
        return OracleBackend.from_file(
            cfg.require("backend", "truth"),
            relevance_error=cfg.number("backend", "relevance_error"),
            direction_error=cfg.number("backend", "direction_error"),
            seed=cfg.number("backend", "oracle_seed", int),
        )
    if kind == "lexicon":
        path = cfg.get("backend", "lexicon")
        inner = LexiconBackend.from_file(path, model_id=model) if path else LexiconBackend(model_id=model)
    elif kind == "remote":
        rpm = cfg.number("backend", "rpm")
        inner = RemoteBackend(
            endpoint=cfg.require("backend", "endpoint"),
            model_id=model,
            api_key_env=cfg.require("backend", "api_key_env"),
            max_attempts=cfg.number("backend", "max_attempts", int),
            max_in_flight=cfg.number("backend", "max_in_flight", int),
            rpm=rpm or None,
            timeout=cfg.number("backend", "timeout"),
        )
    else:
        raise ConfigError(f"unknown backend {kind!r}; choose remote, lexicon, oracle or replay")
    return CachedBackend(inner, cache_path) if cache_path else inner


def load_pool(cfg: RunConfig, method: Method):
    path = cfg.get("data", f"exemplars_{method.value}")
    if path:
        return load_exemplars(path)
    shipped = resources.files("trendvote.data.exemplars").joinpath(f"sp500_{method.value}.jsonl")
    with resources.as_file(shipped) as p:
        return load_exemplars(p)


def load_run_template(cfg: RunConfig) -> str | None:
    path = cfg.get("data", "template")
    return load_template(path) if path else None


def run_split(cfg: RunConfig, mcfg: MethodConfig, split: DatasetSplit, backend):
    ctx = build_context(mcfg, load_pool(cfg, mcfg.kind), load_run_template(cfg))
    return run_method(split, mcfg, backend, ctx, workers=cfg.number("method", "workers", int))


def positive_class(cfg: RunConfig) -> TrendLabel:
    return TrendLabel(cfg.require("report", "positive_class").capitalize())


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(cfg: RunConfig, args) -> int:
    splits, dropped = load_splits(cfg)
    print(f"dropped days (empty news window): {dropped}")
    print(f"{'split':<6} {'span':<24} {'days':>6}  label distribution")
    for name, split in splits.items():
        counts = split.label_counts()
        span = f"{split.span[0]}..{split.span[1]}"
        print(f"{name:<6} {span:<24} {len(split):>6}  Down / Up ({counts[TrendLabel.DOWN]} / {counts[TrendLabel.UP]})")
    return EXIT_OK


def cmd_predict(cfg: RunConfig, args) -> int:
    mcfg = cfg.method_config()
    splits, _ = load_splits(cfg)
    backend = make_backend(cfg)
    preds = run_split(cfg, mcfg, splits[args.split], backend)
    out = cfg.out_dir() / f"predictions_{mcfg.kind.value}_{args.split}.jsonl"
    write_predictions(preds, out)
    if preds:
        m = evaluate_predictions(preds, positive_class(cfg))
        print(
            f"{mcfg.kind.value} on {args.split}: {len(preds)} days, acc={m.acc:.4f} "
            f"P={m.precision:.4f} R={m.recall:.4f} F1={m.f1:.4f} fallback={m.fallback_rate:.3f}"
        )
    else:
        print(f"{mcfg.kind.value} on {args.split}: no days")
    print(f"wrote {out}")
    return EXIT_OK


def _sweep_lambda(cfg, mcfg, split, backend, pos):
    if mcfg.kind is Method.STANDARD:
        raise ConfigError("the lambda axis needs the voting or dtv method")
    preds = run_split(cfg, mcfg, split, backend)
    grid = cfg.floats("sweep", "lambda_grid")
    best, table = sweep_lambda(preds, grid=grid)
    rows = []
    for lam, _ in table:
        finals = revote(preds, lam)
        c = confusion(finals, [p.truth for p in preds], pos)
        rows.append((f"{lam:g}", metrics(c)))
    print(f"best lambda: {best:g}")
    return rows


def cmd_sweep(cfg: RunConfig, args) -> int:
    mcfg = cfg.method_config()
    splits, _ = load_splits(cfg)
    split = splits[args.split or ("valid" if args.axis == "lambda" else "test")]
    if not split.instances:
        raise DataValidationError(f"split {split.name} is empty")
    backend = make_backend(cfg)
    pos = positive_class(cfg)
    rows = []
    if args.axis == "lambda":
        rows = _sweep_lambda(cfg, mcfg, split, backend, pos)
    elif args.axis == "shots":
        n_classes = len(mcfg.label_set)
        for total in cfg.ints("sweep", "shots"):
            if total % n_classes:
                raise ConfigError(f"{total}-shot is not divisible across {n_classes} classes")
            preds = run_split(cfg, replace(mcfg, shots_per_class=total // n_classes), split, backend)
            rows.append((total, evaluate_predictions(preds, pos)))
    elif args.axis == "news_count":
        for n in cfg.ints("sweep", "news_counts"):
            preds = run_split(cfg, replace(mcfg, max_news=n), split, backend)
            rows.append((n, evaluate_predictions(preds, pos)))
    elif args.axis == "variant":
        for text in cfg.require("sweep", "variants").split(","):
            try:
                variant = InputVariant.parse(text)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            preds = run_split(cfg, replace(mcfg, input_variant=variant), split, backend)
            rows.append((str(variant), evaluate_predictions(preds, pos)))
    written = report([], cfg.out_dir(), pos, series={args.axis: rows})
    for x, m in rows:
        print(f"{x}\tacc={m.acc:.4f}\tP={m.precision:.4f}\tR={m.recall:.4f}\tF1={m.f1:.4f}")
    print(f"wrote {written[f'series_{args.axis}']}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    if not args.files:
        raise UsageError("eval needs at least one prediction file")
    pos = positive_class(cfg)
    loaded = []
    for f in args.files:
        if not Path(f).is_file():
            raise DataValidationError(f"prediction file not found: {f}")
        preds = read_predictions(f)
        if not preds:
            raise DataValidationError(f"prediction file is empty: {f}")
        loaded.append((Path(f).stem, preds))

    baseline_name, baseline = loaded[0]
    runs = []
    for name, preds in loaded:
        sig = None
        if preds is not baseline:
            sig = compare_predictions(preds, baseline)
        runs.append(
            RunResult(
                name=name,
                config={"file": name, "method": preds[0].method.value},
                metrics=evaluate_predictions(preds, pos),
                significance=sig,
                baseline=baseline_name if sig else None,
            )
        )
    pair_lines = []
    for i in range(len(loaded)):
        for j in range(i + 1, len(loaded)):
            sig = compare_predictions(loaded[i][1], loaded[j][1])
            if sig is None:
                logger.warning("skipping t-test %s vs %s: day sets differ", loaded[i][0], loaded[j][0])
                continue
            pair_lines.append(f"{loaded[i][0]} vs {loaded[j][0]}: t={sig.t_statistic:.4f} p={sig.p_value:.4g} n={sig.n_pairs}")
    out = cfg.out_dir()
    report(runs, out, pos)
    (out / "significance.txt").write_text("".join(line + "\n" for line in pair_lines), encoding="utf-8")
    print(format_table(runs, pos), end="")
    for line in pair_lines:
        print(line)
    return EXIT_OK


def cmd_synth(cfg: RunConfig, args) -> int:
    try:
        scfg = SynthConfig(
            n_days=cfg.number("synth", "n_days", int),
            items_per_day=cfg.number("synth", "items_per_day", int),
            relevance_rate=cfg.number("synth", "relevance_rate"),
            direction_accuracy=cfg.number("synth", "direction_accuracy"),
            noise_direction_bias=cfg.number("synth", "noise_direction_bias"),
            seed=cfg.number("synth", "seed", int),
            start_date=parse_date(cfg.require("synth", "start_date")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    corpus = generate(scfg)
    paths = corpus.write(cfg.out_dir())
    n_items = sum(len(d.items) for d in corpus.days)
    print(f"generated {len(corpus.days)} days, {n_items} items")
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "predict": cmd_predict,
    "sweep": cmd_sweep,
    "eval": cmd_eval,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run config")
    common.add_argument("--method", choices=[m.value for m in Method])
    common.add_argument("--lambda", dest="lambda_", metavar="LAMBDA")
    common.add_argument("--shots", help="exemplars per class")
    common.add_argument("--max-news", dest="max_news")
    common.add_argument("--variant", help="title or article-{first,middle,last,summary}-N")
    common.add_argument("--backend", choices=["remote", "lexicon", "oracle", "replay"])
    common.add_argument("--cache", help="response cache file")
    common.add_argument("--seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="trendvote", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("ingest", parents=[common], help="validate data and print split statistics")
    p = sub.add_parser("predict", parents=[common], help="run one method over a split")
    p.add_argument("--split", choices=SPLIT_NAMES, default="test")
    p = sub.add_parser("sweep", parents=[common], help="accuracy series over one axis")
    p.add_argument("--axis", required=True, choices=["lambda", "shots", "news_count", "variant"])
    p.add_argument("--split", choices=SPLIT_NAMES)
    p = sub.add_parser("eval", parents=[common], help="metrics and paired t-tests for prediction files")
    p.add_argument("files", nargs="*")
    sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    return parser


def _split_overrides(extra: Sequence[str]) -> dict[str, str]:
    overrides, i = {}, 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or "." not in tok:
            raise UsageError(f"unrecognized argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"override {tok} needs a value")
            i += 1
            value = extra[i]
        overrides[key] = value
        i += 1
    return overrides


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = _split_overrides(extra)
        for flag, dotted in FLAG_KEYS.items():
            value = getattr(args, "lambda_" if flag == "lambda" else flag, None)
            if value is not None:
                overrides[dotted] = str(value)
        cfg = RunConfig.load(args.config, overrides)
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"trendvote: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataValidationError, ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"trendvote: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RunAborted, BackendError) as exc:
        print(f"trendvote: run aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED


if __name__ == "__main__":
    sys.exit(main())

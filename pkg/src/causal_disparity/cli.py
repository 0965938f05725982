"""Command-line entry point.

Every subcommand reads a JSON run configuration (``--config``) and writes its
artifacts under ``--out``.  A seed is mandatory, either in the config or via
``--seed``.  Exit codes: 0 success, 2 configuration or data error, 3 failure
inside a pipeline stage.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import audit, decompose, hetero_forest, presets, scm, subgroup
from .learners import LearnerSpec
from .rng import subseed
from .tabular import DataError, RoledDataset, RoleSchema, bind_roles, load_csv, split_stratified

log = logging.getLogger("causal_disparity")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


class ConfigError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


@dataclass(frozen=True)
class RunConfig:
    seed: int
    dataset: Path | None = None
    preset: str | None = None
    schema: RoleSchema | None = None
    mu_spec: LearnerSpec | None = None
    nu_spec: LearnerSpec | None = None
    forest: hetero_forest.ForestParams = field(default_factory=hetero_forest.ForestParams)
    binning: subgroup.BinningSpec | None = None
    test_fraction: float = 0.2
    k: int = decompose.DEFAULT_K
    bootstrap: int = decompose.DEFAULT_B
    audit_bootstrap: int = 100
    reruns: int = 10
    baseline_spec: LearnerSpec | None = None
    bin_width: float = 0.005
    effects: Path | None = None
    predictions: Path | None = None
    truth: Path | None = None
    scm: Path | None = None
    n: int | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def load(cls, path: str | Path | None, seed: int | None = None, base_dir: Path | None = None,
             overrides: dict | None = None) -> "RunConfig":
        raw: dict = {}
        if path is not None:
            p = Path(path)
            if not p.is_file():
                raise ConfigError(f"config file {p} not found")
            try:
                raw = json.loads(p.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {p} is not valid JSON: {exc}") from None
            base_dir = base_dir or p.parent
        raw.update(overrides or {})
        return cls.from_dict(raw, seed=seed, base_dir=base_dir or Path("."))

    @classmethod
    def from_dict(cls, raw: dict, seed: int | None = None, base_dir: Path = Path(".")) -> "RunConfig":
        raw = dict(raw)
        if seed is not None:
            raw["seed"] = seed
        if "seed" not in raw:
            raise ConfigError("a seed is required (config 'seed' or --seed)")
        known = {"seed", "dataset", "preset", "schema", "mu_spec", "nu_spec", "forest", "binning", "test_fraction",
                 "k", "bootstrap", "audit_bootstrap", "reruns", "baseline_spec", "bin_width", "effects",
                 "predictions", "truth", "scm", "n"}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")

        def path(key):
            if raw.get(key) is None:
                return None
            p = Path(raw[key])
            return p if p.is_absolute() else base_dir / p

        try:
            seed_v = int(raw["seed"])
            if seed_v < 0:
                raise ConfigError("seed must be non-negative")
            schema = None
            preset = raw.get("preset")
            if isinstance(raw.get("schema"), dict):
                schema = RoleSchema.from_dict(raw["schema"])
            elif isinstance(raw.get("schema"), str):
                sp = path("schema")
                if not sp.is_file():
                    raise ConfigError(f"schema file {sp} not found")
                schema = RoleSchema.from_json(sp)
            elif preset is not None:
                schema = presets.schema(preset)
            binning = None
            if raw.get("binning") is not None:
                binning = subgroup.BinningSpec.from_dict(raw["binning"])
            elif preset is not None:
                binning = subgroup.BinningSpec(presets.THRESHOLDS[preset])
            spec = lambda key: LearnerSpec.from_dict(raw[key]) if raw.get(key) else None  # noqa: E731
            cfg = cls(
                seed=seed_v, dataset=path("dataset"), preset=preset, schema=schema,
                mu_spec=spec("mu_spec"), nu_spec=spec("nu_spec"),
                forest=hetero_forest.ForestParams.from_dict(raw.get("forest") or {}),
                binning=binning, test_fraction=float(raw.get("test_fraction", 0.2)), k=int(raw.get("k", 5)),
                bootstrap=int(raw.get("bootstrap", decompose.DEFAULT_B)),
                audit_bootstrap=int(raw.get("audit_bootstrap", 100)), reruns=int(raw.get("reruns", 10)),
                baseline_spec=spec("baseline_spec"), bin_width=float(raw.get("bin_width", 0.005)),
                effects=path("effects"), predictions=path("predictions"), truth=path("truth"),
                scm=path("scm"), n=None if raw.get("n") is None else int(raw["n"]), raw=raw,
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None
        for key in ("dataset", "effects", "predictions", "truth", "scm"):
            p = getattr(cfg, key)
            if p is not None and not p.is_file():
                raise ConfigError(f"{key} file {p} not found")
        return cfg

    def canonical(self) -> str:
        """Canonical JSON of the raw config (seed included) for hashing."""
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def roled(self) -> RoledDataset:
        if self.dataset is None:
            raise ConfigError("config needs a 'dataset'")
        if self.schema is None:
            raise ConfigError("config needs a 'schema' or 'preset'")
        return bind_roles(load_csv(self.dataset, self.schema.columns), self.schema)

    def need_binning(self) -> subgroup.BinningSpec:
        if self.binning is None:
            raise ConfigError("config needs 'binning' thresholds (or a preset)")
        return self.binning


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    """Output directory bookkeeping: written files and their hashes."""

    def __init__(self, cfg: RunConfig, out: Path, threads: int, ci: str):
        self.cfg = cfg
        self.out = out
        self.threads = threads
        self.ci = ci
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def stage(self, name: str, fn: Callable):
        t0 = time.perf_counter()
        log.info("stage %s: start", name)
        try:
            result = fn()
        except (ConfigError, FileNotFoundError):
            raise
        except DataError as exc:
            # bad input surfaced mid-stage is still a data error
            raise ConfigError(f"stage {name!r}: {exc}") from exc
        except Exception as exc:  # noqa: BLE001 - every stage failure maps to exit 3
            raise StageError(name, exc) from exc
        log.info("stage %s: done in %.1fs", name, time.perf_counter() - t0)
        return result

    def write_manifest(self, command: str) -> Path:
        manifest = {
            "command": command,
            "config_hash": self.cfg.config_hash(),
            "seed": self.cfg.seed,
            "files": {name: _sha256(self.out / name) for name in sorted(set(self.files))},
        }
        p = self.out / "manifest.json"
        p.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return p


# stages -------------------------------------------------------------------

def _stage_decompose(run: Run, data: RoledDataset) -> decompose.DecompositionResult:
    cfg = run.cfg
    result = run.stage("decompose", lambda: decompose.estimate_decomposition(
        data, cfg.mu_spec, cfg.nu_spec, k=cfg.k, b=cfg.bootstrap, seed=cfg.seed, n_jobs=run.threads))
    truth = json.loads(cfg.truth.read_text()) if cfg.truth is not None else None
    decompose.write_report(result, run.path("decomposition.json"), run.path("decomposition.csv"), truth=truth)
    return result


def _stage_effects(run: Run, data: RoledDataset) -> hetero_forest.IndividualEffects:
    cfg = run.cfg

    def go():
        model = hetero_forest.fit_direct_effect_forest(data, cfg.forest, seed=subseed(cfg.seed, "forest"))
        return model, hetero_forest.predict_effects(model, data)

    model, effects = run.stage("effects", go)
    effects.write_csv(run.path("effects.csv"))
    subgroup.export_histogram(effects, cfg.bin_width).write_csv(run.path("histogram.csv"))
    _write_importance(model, run.path("importance.csv"))
    return effects


def _write_importance(model, path: Path) -> None:
    by_feature = hetero_forest.variable_importance(model)
    by_source = hetero_forest.variable_importance(model, by_source=True)
    with open(path, "w") as fh:
        fh.write("level,name,score\n")
        for level, vi in (("source", by_source), ("feature", by_feature)):
            for name, score in vi.ranking():
                fh.write(f"{level},{json.dumps(name)},{score:.6f}\n")


def _load_effects(run: Run, data: RoledDataset) -> hetero_forest.IndividualEffects:
    if run.cfg.effects is None:
        return _stage_effects(run, data)
    ids, tau = [], []
    with open(run.cfg.effects) as fh:
        header = fh.readline().strip().split(",")
        if header != ["row_id", "tau_hat"]:
            raise ConfigError(f"{run.cfg.effects}: expected header row_id,tau_hat")
        for line in fh:
            a, b = line.strip().split(",")
            ids.append(int(a))
            tau.append(float(b))
    effects = hetero_forest.IndividualEffects(np.array(ids), np.array(tau), True)
    if not np.array_equal(effects.row_ids, data.row_ids):
        raise ConfigError("effects file rows do not match the dataset rows")
    return effects


def _stage_subgroup(run: Run, data: RoledDataset, effects) -> subgroup.SubgroupAssignment:
    spec = run.cfg.need_binning()
    assignment, summary = run.stage("subgroup", lambda: (
        lambda a: (a, subgroup.summarize(data, a)))(subgroup.assign(effects, spec)))
    summary.write_json(run.path("subgroups.json"))
    summary.write_csv(run.path("subgroups.csv"))
    return assignment


def _stage_audit(run: Run, data: RoledDataset, assignment: subgroup.SubgroupAssignment) -> None:
    cfg = run.cfg
    spec = cfg.baseline_spec or audit.default_baseline_spec()
    if cfg.predictions is not None:
        preds = audit.PredictionSet.read_csv(cfg.predictions)
        ids = set(preds.row_ids.tolist())
        test = data.take(np.flatnonzero([int(r) in ids for r in data.row_ids.tolist()]))
        pred_sets = [preds]
    else:
        train, test = run.stage("split", lambda: split_stratified(
            data, cfg.test_fraction, assignment.group, seed=cfg.seed))

        def train_all():
            model = audit.train_baseline(train, spec, seed=subseed(cfg.seed, "baseline"))
            sets = [audit.predict_labels(model, test)]
            if run.ci == "reruns":
                for r in range(cfg.reruns):
                    rng = np.random.Generator(np.random.PCG64(subseed(cfg.seed, "rerun", r)))
                    boot = train.take(np.sort(rng.integers(0, train.n, train.n)), renumber=True)
                    m = audit.train_baseline(boot, spec, seed=subseed(cfg.seed, "rerun-model", r))
                    sets.append(audit.predict_labels(m, test))
            return sets

        pred_sets = run.stage("train_baseline", train_all)
    pred_sets[0].write_csv(run.path("predictions.csv"))

    def evaluate():
        if run.ci == "reruns" and len(pred_sets) > 1:
            return audit.evaluate_reruns(pred_sets, assignment, test)
        return audit.evaluate(pred_sets[0], assignment, test, b=cfg.audit_bootstrap,
                              seed=subseed(cfg.seed, "audit"))

    report = run.stage("evaluate", evaluate)
    report.write_json(run.path("audit.json"))
    report.write_csv(run.path("audit.csv"))
    report.write_gap_plot_csv(run.path("gaps.csv"))
    analysis = run.stage("gap_analysis", lambda: audit.gap_analysis(report))
    run.path("gap_analysis.json").write_text(json.dumps(analysis, indent=2, sort_keys=True) + "\n")


# commands -----------------------------------------------------------------

def cmd_simulate(run: Run) -> None:
    """Draw a synthetic dataset with its true effects."""
    cfg = run.cfg
    if cfg.scm is None:
        raise ConfigError("simulate needs an 'scm' model file")
    if cfg.n is None or cfg.n < 1:
        raise ConfigError("simulate needs n >= 1")
    try:
        spec = scm.load_spec(cfg.scm)
    except (scm.ScmError, KeyError, ValueError) as exc:
        raise ConfigError(f"invalid model file: {exc}") from None
    data = run.stage("simulate", lambda: scm.sample(spec, cfg.n, cfg.seed))
    data.to_csv(run.path("data.csv"))
    if isinstance(spec, (scm.DiscreteScm, scm.LinearScm)):
        truth = scm.true_effects(spec)
        run.path("truth.json").write_text(json.dumps(truth.to_dict(), indent=2, sort_keys=True) + "\n")
    run.path("schema.json").write_text(json.dumps(scm.scm_schema(spec).to_dict(), indent=2, sort_keys=True) + "\n")


def cmd_decompose(run: Run) -> None:
    """Decompose the outcome gap into direct, indirect and spurious parts."""
    _stage_decompose(run, run.cfg.roled())


def cmd_effects(run: Run) -> None:
    """Fit the causal forest and export individual direct effects."""
    _stage_effects(run, run.cfg.roled())


def cmd_subgroup(run: Run) -> None:
    """Bin individuals by direct effect and summarize each sub-group."""
    data = run.cfg.roled()
    _stage_subgroup(run, data, _load_effects(run, data))


def cmd_audit(run: Run) -> None:
    """Train the baseline classifier and audit its per-sub-group gaps."""
    data = run.cfg.roled()
    assignment = _stage_subgroup(run, data, _load_effects(run, data))
    _stage_audit(run, data, assignment)


def cmd_pipeline(run: Run) -> None:
    """Run decompose, effects, subgroup and audit in sequence."""
    cfg = run.cfg
    data = cfg.roled()
    cfg.need_binning()
    _stage_decompose(run, data)
    effects = _stage_effects(run, data)
    assignment = _stage_subgroup(run, data, effects)
    _stage_audit(run, data, assignment)


COMMANDS = {
    "simulate": cmd_simulate,
    "decompose": cmd_decompose,
    "effects": cmd_effects,
    "subgroup": cmd_subgroup,
    "audit": cmd_audit,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causal-disparity",
        description="Decompose outcome disparities, estimate individual direct effects and audit sub-groups.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0] if fn.__doc__ else None)
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--ci", choices=("bootstrap", "reruns"), default="bootstrap",
                       help="audit interval method")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "simulate":
            p.add_argument("--scm", type=Path, help="model file (overrides the config)")
            p.add_argument("--n", type=int, help="rows to draw (overrides the config)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        overrides = {}
        if getattr(args, "scm", None) is not None:
            overrides["scm"] = str(args.scm.resolve())
        if getattr(args, "n", None) is not None:
            overrides["n"] = args.n
        cfg = RunConfig.load(args.config, seed=args.seed, overrides=overrides)
        run = Run(cfg, args.out, args.threads, args.ci)
        COMMANDS[args.command](run)
        run.write_manifest(args.command)
    except (ConfigError, DataError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

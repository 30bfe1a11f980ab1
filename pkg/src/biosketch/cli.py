"""Command-line front end: enroll, auth, revoke, eval, train-toy.

Settings resolve in this order: command-line flag, then config file, then
built-in default. Exit codes: 0 success or GRANT, 1 DENY or unknown subject,
2 usage, 3 data or parse error, 4 internal error or enrollment exhaustion.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import analysis
from .features import (
    BitChannelModel,
    EstimationError,
    FeatureFormatError,
    SubjectPopulation,
    estimate_channel,
    group_by_subject,
    ingest_features,
    read_features,
    synth_population,
)
from .pipeline import (
    ConflictError,
    EnrollmentError,
    PipelineError,
    TemplateStore,
    UnknownSubject,
    UserKey,
    authenticate,
    enroll_new,
    revoke_and_reissue,
)
from .rs import RsCodeParams, RSError

EXIT_OK, EXIT_DENY, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3, 4
ANALYSES = ("distributions", "eer", "roc", "gs", "privacy", "unlink", "retrieval")


class ConfigError(ValueError):
    pass


class UsageError(ValueError):
    pass


# -- configuration ------------------------------------------------------------


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    J: int = 1024
    m: int = 8
    N: list[int] = field(default_factory=lambda: [96])
    K: list[int] = field(default_factory=lambda: [7, 10, 13])
    G: int | None = None
    scenario: str = "stolen_key"
    analyses: tuple[str, ...] = ANALYSES
    seed: int = 0
    out: Path = Path("results")
    # population: synthetic unless ``features`` is set
    features: Path | None = None
    subjects: int = 50
    samples: int = 20
    p_genuine: float = 0.05
    p_impostor: float = 0.5
    profile: str = "uniform"
    concentration: float = 10.0
    databases: int = 6
    bins: int = 50
    omega: float = 1.0
    R: int = 1000
    radius: int = 2
    on_failure: str = "systematic"

    def validate(self) -> "ExperimentConfig":
        if self.m != 8:
            raise ConfigError("only m = 8 is supported")
        if not self.N or not self.K:
            raise ConfigError("code.N and code.K must be non-empty")
        if self.G is not None and (len(self.N) != 1 or self.G != 8 * self.N[0]):
            raise ConfigError(f"G={self.G} must equal 8*N for a single N, got N={self.N}")
        for n in self.N:
            for k in self.K:
                try:
                    RsCodeParams(n, k)
                except RSError as exc:
                    raise ConfigError(f"invalid code N={n}, K={k}: {exc}") from None
            if 8 * n > self.J and self.features is None:
                raise ConfigError(f"G=8N={8 * n} exceeds J={self.J}")
        unknown = set(self.analyses) - set(ANALYSES)
        if unknown:
            raise ConfigError(f"unknown analyses: {sorted(unknown)}")
        if self.scenario not in analysis.scores.SCENARIOS:
            raise ConfigError(f"scenario must be one of {analysis.scores.SCENARIOS}")
        if self.profile not in ("uniform", "beta"):
            raise ConfigError("population.profile must be 'uniform' or 'beta'")
        if self.features is not None and not self.features.exists():
            raise ConfigError(f"feature file {self.features} does not exist")
        return self

    @property
    def code_params(self) -> list[RsCodeParams]:
        return [RsCodeParams(n, k, self.m) for n in self.N for k in self.K]

    def as_dict(self) -> dict[str, Any]:
        d = {k: v for k, v in self.__dict__.items() if k != "out"}
        d["features"] = None if self.features is None else str(self.features)
        d["analyses"] = list(self.analyses)
        return d


def _as_list(v) -> list[int]:
    return [int(x) for x in v] if isinstance(v, (list, tuple)) else [int(v)]


def load_config(path: str | Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path}: {exc}") from None


def build_experiment(raw: dict[str, Any], base: Path = Path(".")) -> ExperimentConfig:
    exp = raw.get("experiment", {})
    code = raw.get("code", {})
    pop = raw.get("population", {})
    unlink = raw.get("unlink", {})
    ret = raw.get("retrieval", {})
    cfg = ExperimentConfig()
    try:
        cfg.name = str(exp.get("name", cfg.name))
        cfg.J = int(exp.get("J", cfg.J))
        cfg.scenario = str(exp.get("scenario", cfg.scenario))
        cfg.analyses = tuple(exp.get("analyses", cfg.analyses))
        cfg.seed = int(exp.get("seed", cfg.seed))
        if "out" in exp:
            cfg.out = base / exp["out"]
        cfg.on_failure = str(exp.get("on_failure", cfg.on_failure))
        cfg.m = int(code.get("m", cfg.m))
        cfg.N = _as_list(code.get("N", cfg.N))
        cfg.K = _as_list(code.get("K", cfg.K))
        cfg.G = int(code["G"]) if "G" in code else None
        if "features" in pop:
            cfg.features = base / pop["features"]
        cfg.subjects = int(pop.get("subjects", cfg.subjects))
        cfg.samples = int(pop.get("samples", cfg.samples))
        cfg.p_genuine = float(pop.get("p_genuine", cfg.p_genuine))
        cfg.p_impostor = float(pop.get("p_impostor", cfg.p_impostor))
        cfg.profile = str(pop.get("profile", cfg.profile))
        cfg.concentration = float(pop.get("concentration", cfg.concentration))
        cfg.databases = int(unlink.get("databases", cfg.databases))
        cfg.bins = int(unlink.get("bins", cfg.bins))
        cfg.omega = float(unlink.get("omega", cfg.omega))
        cfg.R = int(ret.get("R", cfg.R))
        cfg.radius = int(ret.get("radius", cfg.radius))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    return cfg


def make_population(cfg: ExperimentConfig) -> SubjectPopulation:
    if cfg.features is not None:
        pop = ingest_features(cfg.features, seed=cfg.seed)
        cfg.J = pop.J
        return pop
    if cfg.profile == "beta":
        channel = BitChannelModel.beta_profile(cfg.J, cfg.p_genuine, cfg.concentration, cfg.p_impostor, cfg.seed)
    else:
        channel = BitChannelModel.uniform(cfg.J, cfg.p_genuine, cfg.p_impostor)
    return synth_population(cfg.subjects, cfg.J, channel, cfg.seed, samples_per_subject=cfg.samples)


# -- eval ---------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return str(v)


def _write_csv(path: Path, experiment: str, header: list[str], rows) -> None:
    buf = io.StringIO()
    buf.write(f"# experiment: {experiment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def _run_distributions(pop, cfg, G):
    s = analysis.score_distributions(pop, G, scenario=cfg.scenario, seed=cfg.seed)
    edges = np.linspace(0.0, 1.0, 51)
    counts = [np.histogram(x, edges)[0] for x in (s.genuine, s.impostor, s.attacker_stolen)]
    rows = [(edges[i], edges[i + 1], *(int(c[i]) for c in counts)) for i in range(50)]
    metrics = {
        "genuine_mean": float(s.genuine.mean()),
        "unknown_key_mean": float(s.impostor.mean()),
        "stolen_key_mean": float(s.attacker_stolen.mean()),
    }
    return {"distributions": (["bin_lo", "bin_hi", "genuine", "unknown_key", "stolen_key"], rows)}, metrics


def _run_eer(pop, cfg, G):
    s = analysis.score_distributions(pop, G, scenario=cfg.scenario, seed=cfg.seed)
    rows, metrics = [], {}
    for sc in analysis.scores.SCENARIOS:
        rate, th = analysis.eer(s, sc)
        rows.append((sc, rate, th))
        metrics[f"eer_{sc}"] = rate
    return {"eer": (["scenario", "eer", "threshold"], rows)}, metrics


def _run_roc(pop, cfg, G):
    s = analysis.score_distributions(pop, G, scenario=cfg.scenario, seed=cfg.seed)
    rows, metrics = [], {}
    for sc in analysis.scores.SCENARIOS:
        pts = analysis.roc(s, sc)
        rows.extend((sc, far, gar) for far, gar in pts.tolist())
        metrics[f"auc_{sc}"] = analysis.scores.roc_auc(pts)
    return {"roc": (["scenario", "far", "gar"], rows)}, metrics


def _run_gs(pop, cfg, N):
    curve = analysis.gs_curve(pop, 8 * N, cfg.K, cfg.scenario, cfg.seed, cfg.on_failure)
    rows = [(curve.n_bits, p.k_bits, p.gar, p.far, p.decoded_rate) for p in curve.points]
    metrics = {f"gar_n{curve.n_bits}_k{p.k_bits}": p.gar for p in curve.points}
    return {"gs": (["n_bits", "k_bits", "gar", "far", "decoded_rate"], rows)}, metrics


def _run_privacy(pop, cfg, _):
    rows = []
    for p in cfg.code_params:
        for mode in analysis.privacy.COMPROMISE:
            rows.append((p.n_bits, p.k_bits, mode, analysis.privacy_leakage(pop.J, p.n_bits, p.k_bits, mode)))
    b = analysis.zero_leakage_boundary(pop.J)
    metrics = {"zero_leakage_max_n": b.zero_leakage_max_n, "first_leaky_n": b.first_leaky_n}
    return {"privacy": (["n_bits", "k_bits", "compromised", "leakage_bits"], rows)}, metrics


def _run_unlink(pop, cfg, params):
    rep = analysis.unlinkability(pop, params, cfg.databases, cfg.seed, cfg.bins, cfg.omega, cfg.on_failure)
    rows = [(params.n_bits, params.k_bits, c, d) for c, d in rep.rows()]
    return {"unlink": (["n_bits", "k_bits", "score", "D"], rows)}, {
        f"d_sys_n{params.n_bits}_k{params.k_bits}": rep.d_sys
    }


def _run_retrieval(pop, cfg, _):
    q_codes, q_labels, db_codes, db_labels = [], [], [], []
    for i, sid in enumerate(pop.subject_ids):
        rows = pop.samples[sid]
        q_codes.append(rows[0])
        q_labels.append(i)
        db_codes.extend(rows[1:])
        db_labels.extend([i] * (len(rows) - 1))
    R = min(cfg.R, len(db_labels))
    top_k = tuple(k for k in (100, 500, 1000) if k <= len(db_labels)) or (len(db_labels),)
    rep = analysis.retrieval_metrics(
        np.array(db_codes), np.array(db_labels), np.array(q_codes), np.array(q_labels), R, cfg.radius, top_k
    )
    rows = [("map_at_r", rep.map_at_r), ("precision_at_radius", rep.precision_at_radius)]
    rows += [(f"precision_at_{k}", v) for k, v in sorted(rep.precision_at_k.items())]
    rows.append(("empty_radius_queries", rep.empty_radius_queries))
    return {"retrieval": (["metric", "value"], rows)}, {"map_at_r": rep.map_at_r}


RUNNERS: dict[str, Callable] = {
    "distributions": _run_distributions,
    "eer": _run_eer,
    "roc": _run_roc,
    "gs": _run_gs,
    "privacy": _run_privacy,
    "unlink": _run_unlink,
    "retrieval": _run_retrieval,
}


def _tasks(cfg: ExperimentConfig) -> list[tuple[str, Any]]:
    """One task per (analysis, sweep point); order fixes the output order."""
    tasks = []
    for name in ANALYSES:
        if name not in cfg.analyses:
            continue
        if name == "gs":
            tasks.extend(("gs", n) for n in cfg.N)
        elif name == "unlink":
            tasks.extend(("unlink", p) for p in cfg.code_params)
        elif name in ("distributions", "eer", "roc"):
            tasks.extend((name, 8 * n) for n in cfg.N[:1])
        else:
            tasks.append((name, None))
    return tasks


def _execute(task, pop, cfg):
    name, arg = task
    try:
        tables, metrics = RUNNERS[name](pop, cfg, arg)
        return name, tables, metrics, None
    except Exception as exc:  # partial failure is reported, not fatal
        return name, {}, {}, f"{exc.__class__.__name__}: {exc}"


def run_eval(cfg: ExperimentConfig, jobs: int = 1) -> tuple[dict, int]:
    cfg.validate()
    pop = make_population(cfg)
    tasks = _tasks(cfg)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_execute, tasks, [pop] * len(tasks), [cfg] * len(tasks)))
    else:
        results = [_execute(t, pop, cfg) for t in tasks]

    tables: dict[str, tuple[list[str], list]] = {}
    metrics: dict[str, dict] = {}
    errors: dict[str, list[str]] = {}
    for name, tabs, mets, err in results:
        if err is not None:
            errors.setdefault(name, []).append(err)
            continue
        for tname, (header, rows) in tabs.items():
            tables.setdefault(tname, (header, []))[1].extend(rows)
        metrics.setdefault(name, {}).update(mets)

    cfg.out.mkdir(parents=True, exist_ok=True)
    for tname, (header, rows) in tables.items():
        _write_csv(cfg.out / f"{tname}.csv", cfg.name, header, rows)
    report = {
        "experiment": cfg.name,
        "params": cfg.as_dict(),
        "seed": cfg.seed,
        "metrics": metrics,
        "errors": errors,
        "security_bits": sorted({p.k_bits for p in cfg.code_params}),
    }
    (cfg.out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report, EXIT_INTERNAL if errors else EXIT_OK


def _summary(report: dict) -> str:
    lines = [f"experiment {report['experiment']} (seed {report['seed']})"]
    for name in sorted(report["metrics"]):
        for k, v in sorted(report["metrics"][name].items()):
            lines.append(f"  {name:<14} {k:<28} {_fmt(v)}")
    for name, errs in sorted(report["errors"].items()):
        for e in errs:
            lines.append(f"  {name:<14} FAILED {e}")
    return "\n".join(lines)


# -- enroll / auth / revoke ---------------------------------------------------


def _select_feature(path: Path, subject: str, sample: str | None):
    vectors = read_features(path)
    for v in vectors:
        if v.subject_id == subject and (sample is None or v.sample_id == sample):
            return v, vectors
    raise UsageError(f"no feature for subject {subject!r}" + (f" sample {sample!r}" if sample else ""))


def _reliability(vectors, path: Path | None):
    if path is None:
        return None
    groups = group_by_subject(read_features(path))
    return estimate_channel(groups).reliability()


def _code_params(args, raw: dict) -> RsCodeParams:
    code = raw.get("code", {})
    N = args.N if args.N is not None else code.get("N", 96)
    K = args.K if args.K is not None else code.get("K", 13)
    if isinstance(N, list) or isinstance(K, list):
        raise ConfigError("enroll needs a single N and K")
    G = code.get("G")
    if G is not None and int(G) != 8 * int(N):
        raise ConfigError(f"G={G} must equal 8*N={8 * int(N)}")
    return RsCodeParams(int(N), int(K))


def _load_store(path: Path, params: RsCodeParams | None = None) -> TemplateStore:
    if path.exists():
        store = TemplateStore.load(path)
        if params is not None and store.code_params != params:
            raise PipelineError(f"store uses {store.code_params.as_dict()}, requested {params.as_dict()}")
        return store
    if params is None:
        raise FileNotFoundError(f"store {path} does not exist")
    return TemplateStore(params)


def _emit_key(key: UserKey, key_out: Path | None) -> None:
    sys.stdout.write(key.to_text())
    if key_out is not None:
        key_out.write_text(key.to_text())


def cmd_enroll(args, raw) -> int:
    params = _code_params(args, raw)
    store_path = Path(args.store)
    feature, vectors = _select_feature(Path(args.features), args.subject, args.sample)
    rel = _reliability(vectors, Path(args.calibrate) if args.calibrate else None)
    store = _load_store(store_path, params)
    key, _ = enroll_new(
        feature, params, store, args.subject, rel, args.seed, overwrite=args.overwrite, on_failure=args.on_failure
    )
    store.save(store_path)
    _emit_key(key, Path(args.key_out) if args.key_out else None)
    return EXIT_OK


def cmd_auth(args, raw) -> int:
    key = UserKey.from_text(Path(args.key).read_text())
    store = _load_store(Path(args.store))
    feature, _ = _select_feature(Path(args.features), args.subject, args.sample)
    res = authenticate(feature, key, store.code_params, store, args.subject, args.on_failure)
    reason = res.reason.replace("_", " ")
    print(f"{'GRANT' if res.granted else 'DENY'} ({reason})")
    return EXIT_OK if res.granted else EXIT_DENY


def cmd_revoke(args, raw) -> int:
    store_path = Path(args.store)
    store = _load_store(store_path)
    feature, vectors = _select_feature(Path(args.features), args.subject, args.sample)
    rel = _reliability(vectors, Path(args.calibrate) if args.calibrate else None)
    key, _ = revoke_and_reissue(store, args.subject, feature, args.seed, store.code_params, rel, args.on_failure)
    store.save(store_path)
    _emit_key(key, Path(args.key_out) if args.key_out else None)
    return EXIT_OK


def cmd_eval(args, raw) -> int:
    base = Path(args.config).parent if args.config else Path(".")
    cfg = build_experiment(raw, base)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = Path(args.out)
    report, code = run_eval(cfg, args.jobs)
    print(_summary(report))
    return code


def cmd_train_toy(args, raw) -> int:
    from .deephash import (
        ContinuationSchedule,
        LossWeights,
        ToyNetwork,
        TrainingDivergence,
        export_codes,
        grid_search,
        make_toy_dataset,
        train_two_step,
    )

    toy = raw.get("toy", {})
    seed = args.seed if args.seed is not None else int(toy.get("seed", 0))
    out = Path(args.out) if args.out is not None else Path(toy.get("out", "toy"))
    mode = str(toy.get("mode", "FCA"))
    dims = dict(
        n_classes=int(toy.get("classes", 4)),
        per_class=int(toy.get("per_class", 20)),
        d_face_in=int(toy.get("d_face_in", 16)),
        d_iris_in=int(toy.get("d_iris_in", 16)),
    )
    n_bits = int(toy.get("n_bits", 32))
    schedule = ContinuationSchedule(tuple(toy.get("schedule", (1, 2, 4, 8, 16))))
    lr = float(toy.get("lr", 0.01))
    data = make_toy_dataset(**dims, seed=seed)

    def fresh():
        return ToyNetwork.init(
            dims["d_face_in"], dims["d_iris_in"], n_bits=n_bits, n_classes=dims["n_classes"], mode=mode, seed=seed
        )

    weights = LossWeights(*(float(x) for x in toy.get("weights", (8, 2, 2))))
    try:
        if args.grid_search:
            held_out = make_toy_dataset(**dims, seed=seed + 1)
            quick = ContinuationSchedule((1.0,), max_epochs=int(toy.get("grid_epochs", 10)))

            def evaluate(a, b, g):
                res = train_two_step(data, fresh(), LossWeights(a, b, g), quick, lr=lr, seed=seed)
                db = res.network.codes(data.x_face, data.x_iris) > 0
                q = res.network.codes(held_out.x_face, held_out.x_iris) > 0
                return analysis.retrieval_metrics(db, data.labels, q, held_out.labels, R=len(data), top_k=()).map_at_r

            candidates = toy.get("grid_candidates", (1, 2, 4, 8))
            gs = grid_search(evaluate, candidates, int(toy.get("grid_iterations", 5)))
            print(f"selected alpha={gs.alpha:g} beta={gs.beta:g} gamma={gs.gamma:g} (converged={gs.converged})")
            weights = LossWeights(gs.alpha, gs.beta, gs.gamma, weights.lam)
        result = train_two_step(data, fresh(), weights, schedule, lr=lr, seed=seed)
    except TrainingDivergence as exc:
        print(f"error: training diverged in step {exc.step} at beta_bw={exc.beta_bw:g}, epoch {exc.epoch}", file=sys.stderr)
        return EXIT_INTERNAL
    out.mkdir(parents=True, exist_ok=True)
    result.write_history(out / "history.csv")
    export_codes(result.network, data, out / "codes.jsonl")
    print(f"wrote {len(data)} {n_bits}-bit codes to {out / 'codes.jsonl'}")
    return EXIT_OK


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    def globals_(suppress: bool) -> argparse.ArgumentParser:
        # subcommands repeat the global flags without defaults so either position works
        g = argparse.ArgumentParser(add_help=False)
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        g.add_argument("--config", default=d(None), help="TOML config file")
        g.add_argument("--seed", type=int, default=d(None), help="overrides the config seed")
        g.add_argument("--jobs", type=int, default=d(1), help="worker processes for eval")
        g.add_argument("--out", default=d(None), help="output directory (eval, train-toy)")
        return g

    common = globals_(True)
    p = argparse.ArgumentParser(prog="biosketch", parents=[globals_(False)], description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def template_cmd(name, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.add_argument("--store", required=True, help="template store (JSON)")
        sp.add_argument("--features", required=True, help="feature file (.jsonl or .csv)")
        sp.add_argument("--subject", required=True)
        sp.add_argument("--sample", default=None, help="sample id; default first of the subject")
        sp.add_argument("--on-failure", choices=("systematic", "strict"), default="systematic")
        return sp

    for name, help_ in (("enroll", "enroll a subject and print its key"), ("revoke", "reissue a subject's key")):
        sp = template_cmd(name, help_)
        sp.add_argument("--key-out", default=None, help="also write the key to this file")
        sp.add_argument("--calibrate", default=None, help="multi-sample features to order keys by reliability")
        if name == "enroll":
            sp.add_argument("--N", type=int, default=None)
            sp.add_argument("--K", type=int, default=None)
            sp.add_argument("--overwrite", action="store_true")
    sp = template_cmd("auth", "authenticate a probe")
    sp.add_argument("--key", required=True, help="key file")

    sub.add_parser("eval", parents=[common], help="run the analyses named in the config")
    sp = sub.add_parser("train-toy", parents=[common], help="train the toy hashing network")
    sp.add_argument("--grid-search", action="store_true", help="select loss weights first")
    return p


COMMANDS = {"enroll": cmd_enroll, "auth": cmd_auth, "revoke": cmd_revoke, "eval": cmd_eval, "train-toy": cmd_train_toy}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.command in ("enroll", "revoke") and args.seed is None:
        args.seed = 0
    try:
        raw = load_config(args.config)
        return COMMANDS[args.command](args, raw)
    except (ConfigError, UsageError, ConflictError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnknownSubject as exc:
        print(f"DENY (unknown subject {exc.args[0]!r})")
        return EXIT_DENY
    except (FeatureFormatError, EstimationError, PipelineError, RSError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EnrollmentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:
        print(f"internal error: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

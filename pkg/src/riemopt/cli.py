"""Command-line experiment driver.

    riemopt [run] embed|pca|toy [options]      one experiment
    riemopt matrix --task T --matrix NAME      a run matrix
    riemopt eval --embedding E --data D        re-evaluate a saved embedding
    riemopt bounds --theorem 1|2 ...           standalone bound evaluation

Exit status: 0 success, 2 configuration error, 3 runtime or numeric error,
4 I/O error.
"""

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import io
from .bounds import (ZETA_VARIANTS, BoundParams, averaged_suboptimality, estimate_G,
                     estimate_diameter, theorem1_curve, theorem2_regret_bound)
from .datasets import BUILTIN_EDGES, load_builtin
from .embed import (EdgeListError, EmbedConfig, evaluate_reconstruction, init_embedding,
                    read_edges, train_embeddings, transitive_closure)
from .optim import OPTIMIZERS, Schedule, ScheduleError, validate_sequences
from .pca import PcaConfig, PcaProblem, spiked_data, svd_oracle, train_pca
from .poincare import DomainError, PoincareBall
from .stiefel import RankDeficiencyError
from .toy import make_toy, train_toy
from .trace import RunTrace

logger = logging.getLogger("riemopt")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4
ENV_OUT = "RIEMOPT_OUT"
DEFAULT_OUT = "riemopt-out"
TASKS = ("embed", "pca", "toy")
MOMENT_OPTIMIZERS = ("radam", "ramsgrad")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Field:
    name: str
    type: str  # float | int | str | bool | floats
    default: object
    help: str
    tasks: tuple = TASKS
    choices: tuple = None
    aliases: tuple = ()


FIELDS = (
    Field("optimizer", "str", "ramsgrad", "update rule", choices=OPTIMIZERS, aliases=("--opt",)),
    Field("schedule", "str", "constant", "step-size kind: alpha_n = alpha or alpha / n**eta",
          choices=("constant", "diminishing")),
    Field("alpha", "float", 0.1, "base step size"),
    Field("eta", "float", 0.5, "decay exponent of the diminishing schedule, in [1/2, 1)"),
    Field("beta1", "float", 0.9, "first-moment weight (geometric kind: beta1**n)"),
    Field("beta1_kind", "str", "constant", "beta1 sequence kind", choices=("constant", "geometric")),
    Field("beta2", "float", 0.999, "second-moment weight"),
    Field("eps", "float", 1e-8, "denominator stabilizer"),
    Field("burn_in", "int", 0, "epochs run at alpha * burn_in_factor", tasks=("embed",)),
    Field("burn_in_factor", "float", 0.01, "step-size factor during burn-in", tasks=("embed",)),
    Field("seed", "int", 0, "random seed"),
    Field("out", "str", None, f"output directory (default: ${ENV_OUT} or ./{DEFAULT_OUT})"),
    Field("accumulate_epsilon", "bool", False, "store max(v_hat, v) + eps instead of adding eps in the denominator"),
    Field("zeta_variant", "str", "printed", "curvature factor variant in bound reports", choices=ZETA_VARIANTS),
    Field("allow_schedule_violation", "bool", False,
          "warn instead of failing when the schedule breaks the monotonicity hypotheses"),
    Field("data", "str", None,
          "embed: edge-list TSV or builtin:mammals / builtin:tree15; pca: matrix CSV (default: synthetic)",
          tasks=("embed", "pca")),
    Field("closure", "bool", False, "take the transitive closure of the edge list", tasks=("embed",)),
    Field("dim", "int", 5, "ball dimension (toy default 2)", tasks=("embed", "toy")),
    Field("epochs", "int", 50, "training epochs", tasks=("embed",)),
    Field("negatives", "int", 10, "negatives per positive", tasks=("embed",)),
    Field("eval_every", "int", 1, "evaluate MAP and mean rank every this many epochs", tasks=("embed",)),
    Field("init_scale", "float", 1e-3, "initial coordinates uniform in [-s, s]", tasks=("embed",)),
    Field("k", "int", 3, "number of principal components", tasks=("pca",)),
    Field("n", "int", 500, "synthetic rows", tasks=("pca",)),
    Field("d", "int", 20, "synthetic columns", tasks=("pca",)),
    Field("spectrum", "floats", None,
          "synthetic leading eigenvalues, comma-separated (default: 10,5,2,1,.5,.2,...)", tasks=("pca",)),
    Field("tail", "float", 1.0, "eigenvalue padding after an explicit spectrum", tasks=("pca",)),
    Field("batch_size", "int", 32, "minibatch size", tasks=("pca",)),
    Field("iterations", "int", 1000, "optimizer steps", tasks=("pca", "toy")),
    Field("log_every", "int", 1, "metrics row every this many steps", tasks=("pca", "toy")),
    Field("components", "int", 4, "number of ball components", tasks=("toy",)),
    Field("trace_components", "bool", False, "also write per-component norms for the regret bound",
          tasks=("toy",)),
)
FIELD_BY_NAME = {f.name: f for f in FIELDS}
TASK_DEFAULTS = {"toy": {"dim": 2}}


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    optimizer: str = "ramsgrad"
    schedule: str = "constant"
    alpha: float = 0.1
    eta: float = 0.5
    beta1: float = 0.9
    beta1_kind: str = "constant"
    beta2: float = 0.999
    eps: float = 1e-8
    burn_in: int = 0
    burn_in_factor: float = 0.01
    seed: int = 0
    out: str = None
    accumulate_epsilon: bool = False
    zeta_variant: str = "printed"
    allow_schedule_violation: bool = False
    data: str = None
    closure: bool = False
    dim: int = 5
    epochs: int = 50
    negatives: int = 10
    eval_every: int = 1
    init_scale: float = 1e-3
    k: int = 3
    n: int = 500
    d: int = 20
    spectrum: tuple = None
    tail: float = 1.0
    batch_size: int = 32
    iterations: int = 1000
    log_every: int = 1
    components: int = 4
    trace_components: bool = False

    def make_schedule(self):
        return Schedule(kind=self.schedule, alpha0=self.alpha, eta=self.eta, beta1=self.beta1,
                        beta1_kind=self.beta1_kind, beta2=self.beta2, eps=self.eps,
                        burn_in_epochs=self.burn_in, burn_in_factor=self.burn_in_factor)

    def validate(self, warn=True):
        """Raise :class:`ConfigError` on the first invalid value."""
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {', '.join(TASKS)}")
        for f in FIELDS:
            v = getattr(self, f.name)
            if f.choices and v not in f.choices:
                raise ConfigError(f"--{_flag(f.name)} must be one of {', '.join(f.choices)}, got {v!r}")
        try:
            sched = self.make_schedule()
        except ScheduleError as e:
            raise ConfigError(str(e)) from None
        positive = {"embed": ("dim", "negatives", "eval_every"),
                    "pca": ("k", "n", "d", "batch_size", "log_every"),
                    "toy": ("dim", "components", "log_every")}[self.task]
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"--{_flag(name)} must be >= 1, got {getattr(self, name)}")
        for name in ("epochs", "iterations"):
            if getattr(self, name) < 0:
                raise ConfigError(f"--{name} must be >= 0")
        if self.task == "embed" and not self.data:
            raise ConfigError("embed needs --data (a TSV path or builtin:mammals / builtin:tree15)")
        if self.task == "embed" and not 0 < self.init_scale < 1:
            raise ConfigError("--init-scale must lie in (0, 1)")
        if self.task == "pca" and self.data is None:
            if self.k > self.d:
                raise ConfigError(f"--k {self.k} exceeds --d {self.d}")
            if self.spectrum is not None and len(self.spectrum) > self.d:
                raise ConfigError("--spectrum is longer than --d")
        self._check_schedule(sched, warn)
        return self

    def _check_schedule(self, sched, warn):
        if self.optimizer in MOMENT_OPTIMIZERS:
            report = validate_sequences(sched.alpha, sched.beta1_at, n_max=10_000)
        else:
            report = validate_sequences(sched.alpha, lambda n: 0.0, n_max=10_000)
        if report.ok:
            return
        if not self.allow_schedule_violation:
            raise ConfigError(f"schedule violates the convergence hypotheses: {report.reason} "
                              "(pass --allow-schedule-violation to run anyway)")
        if warn:
            logger.warning("schedule violates the convergence hypotheses: %s", report.reason)


def _flag(name):
    return name.replace("_", "-")


def _parse_floats(text):
    try:
        return tuple(float(t) for t in str(text).split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _coerce(field, value, where):
    t = field.type
    bad = ConfigError(f"{where}: '{field.name}' expects {t}, got {type(value).__name__} {value!r}")
    if t == "bool":
        if not isinstance(value, bool):
            raise bad
    elif t == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad
    elif t == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad
        value = float(value)
    elif t == "str":
        if value is not None and not isinstance(value, str):
            raise bad
    elif t == "floats":
        if isinstance(value, str):
            try:
                value = _parse_floats(value)
            except argparse.ArgumentTypeError:
                raise bad from None
        elif isinstance(value, list) and all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            value = tuple(float(v) for v in value)
        elif value is not None:
            raise bad
    return value


def config_from_mapping(task, mapping, where="config"):
    """Validate keys and types of a JSON-style mapping for ``task``."""
    out = {}
    for key, value in mapping.items():
        name = key.replace("-", "_")
        if name == "task":
            if value != task:
                raise ConfigError(f"{where}: task {value!r} does not match command {task!r}")
            continue
        field = FIELD_BY_NAME.get(name)
        if field is None or task not in field.tasks:
            allowed = ", ".join(f.name for f in FIELDS if task in f.tasks)
            raise ConfigError(f"{where}: unknown key {key!r} for task {task} (allowed: {allowed})")
        out[name] = _coerce(field, value, where)
    return out


def make_config(task, overrides=None, env=None):
    """Build and validate an :class:`ExperimentConfig` from defaults plus ``overrides``."""
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; choose from {', '.join(TASKS)}")
    values = dict(TASK_DEFAULTS.get(task, {}))
    values.update(overrides or {})
    if values.get("out") is None:
        env = os.environ if env is None else env
        values["out"] = env.get(ENV_OUT) or DEFAULT_OUT
    return ExperimentConfig(task=task, **values).validate()


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from None
    return data


# -- argument parsing -----------------------------------------------------------


def _add_field_args(parser, tasks):
    for f in FIELDS:
        if not set(f.tasks) & set(tasks):
            continue
        default = TASK_DEFAULTS.get(tasks[0], {}).get(f.name, f.default) if len(tasks) == 1 else f.default
        doc = f"{f.help} (default: {default})" if f.name != "out" else f.help
        names = (f"--{_flag(f.name)}",) + f.aliases
        kw = {"default": argparse.SUPPRESS, "help": doc, "dest": f.name}
        if f.type == "bool":
            parser.add_argument(*names, action=argparse.BooleanOptionalAction, **kw)
        elif f.type == "floats":
            parser.add_argument(*names, type=_parse_floats, metavar="X,Y,...", **kw)
        else:
            parser.add_argument(*names, type={"int": int, "float": float, "str": str}[f.type],
                                choices=f.choices, **kw)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="riemopt", description="Riemannian adaptive optimization experiments.",
        epilog="Exit status: 0 ok, 2 config error, 3 runtime/numeric error, 4 I/O error. "
               "Flags override values from --config.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for task in TASKS:
        p = sub.add_parser(task, help=f"run the {task} task",
                           description=f"Run the {task} task. Flags override --config values.")
        p.add_argument("--config", help="JSON file of option values")
        _add_field_args(p, (task,))

    m = sub.add_parser("matrix", help="run a matrix of optimizer variants on one task")
    m.add_argument("--task", required=True, choices=TASKS)
    group = m.add_mutually_exclusive_group(required=True)
    group.add_argument("--matrix", choices=tuple(BUILTIN_MATRICES), help="built-in variant list")
    group.add_argument("--variants", help="JSON list of {name, option overrides}")
    m.add_argument("--config", help="JSON file with the shared template options")
    _add_field_args(m, TASKS)

    e = sub.add_parser("eval", help="re-evaluate a saved embedding")
    e.add_argument("--embedding", required=True, help="embedding TSV written by the embed task")
    e.add_argument("--data", required=True, help="edge-list TSV or builtin:NAME")
    e.add_argument("--closure", action="store_true", help="take the transitive closure first")
    e.add_argument("--out", help="also write eval.csv into this directory")

    b = sub.add_parser("bounds", help="evaluate a convergence bound from parameters")
    b.add_argument("--theorem", type=int, choices=(1, 2), required=True)
    b.add_argument("--N", type=int, default=1, help="number of product components (default: 1)")
    b.add_argument("--G", type=float, help="gradient-norm bound (--theorem 1)")
    b.add_argument("--D", type=float, required=True, help="diameter bound")
    b.add_argument("--kappa", type=float, default=-1.0, help="curvature lower bound for every component (default: -1)")
    b.add_argument("--n", type=_parse_floats, default=(1, 10, 100, 1000, 10000),
                   help="iteration counts for --theorem 1 (default: 1,10,100,1000,10000)")
    b.add_argument("--trace", help="component-trace CSV written by `toy --trace-components` (--theorem 2)")
    b.add_argument("--T", type=_parse_floats, help="horizons for --theorem 2 (default: trace length)")
    b.add_argument("--output", help="write the report CSV here instead of stdout")
    for name in ("schedule", "alpha", "eta", "beta1", "beta1_kind", "beta2", "eps", "zeta_variant"):
        f = FIELD_BY_NAME[name]
        kw = {"default": f.default, "help": f"{f.help} (default: {f.default})"}
        if f.choices:
            kw["choices"] = f.choices
        b.add_argument(f"--{_flag(name)}", dest=name,
                       type={"float": float, "str": str}[f.type], **kw)
    return parser


def parse_config(argv, env=None):
    """Parse ``argv`` into ``(command, payload)``.

    For task commands ``payload`` is a validated :class:`ExperimentConfig`;
    for ``matrix`` it is ``(template, variants)``; otherwise the argparse
    namespace.  ``run`` may prefix the command.
    """
    argv = list(argv)
    if argv and argv[0] == "run":
        argv = argv[1:]
    ns = build_parser().parse_args(argv)
    if ns.verbose:
        logging.getLogger("riemopt").setLevel(logging.DEBUG)
    if ns.command in TASKS:
        return ns.command, _merge(ns.command, ns, env)
    if ns.command == "matrix":
        template = _merge(ns.task, ns, env, skip=("task", "matrix", "variants"))
        if ns.matrix:
            variants = BUILTIN_MATRICES[ns.matrix]
        else:
            variants = _load_variants(ns.variants, ns.task)
        return "matrix", (template, variants)
    return ns.command, ns


def _merge(task, ns, env, skip=()):
    flags = {k: v for k, v in vars(ns).items()
             if k in FIELD_BY_NAME and k not in skip}
    for name in flags:
        if task not in FIELD_BY_NAME[name].tasks:
            raise ConfigError(f"--{_flag(name)} does not apply to task {task}")
    values = {}
    if getattr(ns, "config", None):
        data = _load_json(ns.config)
        if not isinstance(data, dict):
            raise ConfigError(f"{ns.config}: top level must be a JSON object")
        values.update(config_from_mapping(task, data, ns.config))
    values.update(flags)
    return make_config(task, values, env)


def _load_variants(path, task):
    data = _load_json(path)
    if not isinstance(data, list) or not data:
        raise ConfigError(f"{path}: expected a non-empty JSON list of variants")
    out = []
    for i, item in enumerate(data):
        if not isinstance(item, dict) or not isinstance(item.get("name"), str):
            raise ConfigError(f"{path}: variant {i} needs a string 'name'")
        rest = {k: v for k, v in item.items() if k != "name"}
        out.append((item["name"], config_from_mapping(task, rest, f"{path}[{i}]")))
    return out


def _builtin_variant(name, opt, alpha, beta1=0.9, geometric=False, diminishing=False):
    v = {"optimizer": opt, "alpha": alpha, "beta2": 0.999,
         "schedule": "diminishing" if diminishing else "constant", "eta": 0.5,
         "beta1": beta1, "beta1_kind": "geometric" if geometric else "constant",
         "allow_schedule_violation": True}
    return name, v


BUILTIN_MATRICES = {
    "constant-paper": [
        _builtin_variant("CS1", "rsgd", 0.3),
        _builtin_variant("CS2", "rsgd", 0.1),
        _builtin_variant("CG1", "radagrad", 0.3),
        _builtin_variant("CG2", "radagrad", 0.1),
        _builtin_variant("CD1", "radam", 0.3, 0.9),
        _builtin_variant("CD2", "radam", 0.1, 0.9),
        _builtin_variant("CA1", "ramsgrad", 0.3, 0.9),
        _builtin_variant("CA2", "ramsgrad", 0.3, 0.001),
        _builtin_variant("CA3", "ramsgrad", 0.1, 0.9),
        _builtin_variant("CA4", "ramsgrad", 0.1, 0.001),
    ],
    "diminishing-paper": [
        _builtin_variant("DS1", "rsgd", 30.0, diminishing=True),
        _builtin_variant("DS2", "rsgd", 10.0, diminishing=True),
        _builtin_variant("DG1", "radagrad", 30.0, diminishing=True),
        _builtin_variant("DG2", "radagrad", 10.0, diminishing=True),
        _builtin_variant("DD1", "radam", 30.0, 0.5, True, True),
        _builtin_variant("DD2", "radam", 10.0, 0.5, True, True),
        _builtin_variant("DA1", "ramsgrad", 30.0, 0.5, True, True),
        _builtin_variant("DA2", "ramsgrad", 30.0, 0.9, True, True),
        _builtin_variant("DA3", "ramsgrad", 10.0, 0.5, True, True),
        _builtin_variant("DA4", "ramsgrad", 10.0, 0.9, True, True),
    ],
}


# -- experiments ----------------------------------------------------------------


@dataclass
class RunResult:
    status: int
    files: list
    summary: str
    metrics: list = None


class _Outputs:
    """Tracks files written by one run so a failure can remove them."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.created_dir = not self.dir.exists()
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name):
        p = self.dir / name
        self.files.append(p)
        return p

    def discard(self):
        for p in self.files:
            try:
                p.unlink()
            except FileNotFoundError:
                pass
        if self.created_dir:
            try:
                self.dir.rmdir()
            except OSError:
                pass


def _load_relations(spec, closure):
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTIN_EDGES:
            raise ConfigError(f"unknown built-in dataset {name!r}; choose from {BUILTIN_EDGES}")
        r = load_builtin(name)
    else:
        r = read_edges(spec)
    return transitive_closure(r) if closure else r


def _log_points(total, every):
    pts = list(range(1, total + 1, every))
    if total and pts[-1] != total:
        pts.append(total)
    return pts


def _bound_rows(curve, measured=None):
    rows = []
    for b in curve:
        m = None if measured is None else float(measured[b.n - 1])
        rows.append({"n": b.n, "term1": b.term1, "term2": b.term2, "term3": b.term3,
                     "total": b.total, "measured": m})
    return rows


def _bound_meta(p, curve):
    ok = all(b.hypotheses_ok for b in curve) if curve else True
    return {"bound": "theorem1", "empirical": p.empirical, "hypotheses_ok": ok, "N": p.N,
            "G": p.G, "D": p.D, "kappa": p.kappas[0], "epsilon": p.epsilon,
            "zeta_variant": p.zeta_variant}


def _write_bounds(out, cfg, p, ns, measured=None):
    if cfg.optimizer != "ramsgrad":
        return None
    if cfg.eps <= 0:
        logger.warning("eps = 0: the averaged-suboptimality bound is undefined; no bound report")
        return None
    curve = theorem1_curve(p, ns) if ns else []
    path = out.path("bounds.csv")
    io.write_table(path, "bound-report", _bound_rows(curve, measured), meta=_bound_meta(p, curve))
    return path


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError("non-finite values in the final iterate")


def run_embed(cfg, out):
    r = _load_relations(cfg.data, cfg.closure)
    if len(r) == 0:
        raise ValueError("edge list has no pairs")
    sched = cfg.make_schedule()
    ecfg = EmbedConfig(dim=cfg.dim, optimizer=cfg.optimizer, schedule=sched, epochs=cfg.epochs,
                       negatives=cfg.negatives, seed=cfg.seed, init_scale=cfg.init_scale,
                       accumulate_epsilon=cfg.accumulate_epsilon, record="steps")
    coords0 = init_embedding(r, cfg.dim, cfg.seed, cfg.init_scale)
    ev0 = evaluate_reconstruction(coords0, r)
    rows = [{"epoch": 0, "mean_rank": ev0.mean_rank, "map": ev0.map}]
    snapshots = [coords0.copy()]

    def callback(epoch, table, stats):
        row = {k: stats[k] for k in ("epoch", "mean_loss", "alpha", "beta1")}
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            ev = evaluate_reconstruction(table, r)
            row.update(mean_rank=ev.mean_rank, map=ev.map)
        rows.append(row)
        snapshots.append(table.coords.copy())
        logger.info("epoch %d loss %.6f", epoch, stats["mean_loss"])

    table, trace = train_embeddings(r, ecfg, callback=callback)
    _check_finite(table.coords)
    files = [io.write_table(out.path("metrics.csv"), "embed-metrics", rows),
             io.write_table(out.path("timing.csv"), "timing",
                            [(s["epoch"], s["elapsed_ms"]) for s in trace.epochs]),
             io.write_embedding(out.path("embedding.tsv"), table)]
    if trace.grad_norm_max:
        step = max(1, len(snapshots) // 50)
        D = estimate_diameter(PoincareBall(cfg.dim), snapshots[::step] + [snapshots[-1]])
        G = estimate_G(trace)
        if D > 0 and G > 0:
            p = BoundParams(N=r.n_nouns, G=G, D=D, kappas=[-1.0] * r.n_nouns, epsilon=cfg.eps,
                            schedule=sched, zeta_variant=cfg.zeta_variant, empirical=True)
            ns = [e * len(r) for e in range(1, cfg.epochs + 1)]
            files.append(_write_bounds(out, cfg, p, ns))
    last = rows[-1]
    loss = f"loss {last['mean_loss']:.4f}, " if "mean_loss" in last else ""
    summary = (f"embed {cfg.optimizer}: {r.n_nouns} nouns, {len(r)} pairs, {cfg.epochs} epochs, "
               f"{loss}MAP {last['map']:.4f}, mean rank {last['mean_rank']:.3f}")
    return files, summary, rows


def run_pca(cfg, out):
    if cfg.data:
        data = io.read_matrix(cfg.data)
    else:
        data = spiked_data(cfg.n, cfg.d, cfg.spectrum, cfg.tail, cfg.seed)
    try:
        prob = PcaProblem(data, cfg.k)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    sched = cfg.make_schedule()
    pcfg = PcaConfig(optimizer=cfg.optimizer, schedule=sched, batch_size=cfg.batch_size,
                     iterations=cfg.iterations, seed=cfg.seed,
                     accumulate_epsilon=cfg.accumulate_epsilon, record="steps",
                     log_every=cfg.log_every)
    oracle = svd_oracle(prob)
    U, trace = train_pca(prob, pcfg, oracle)
    _check_finite(U)
    scale = abs(oracle.f_value)
    rows, best = [], math.inf
    for e in trace.epochs:
        best = min(best, e["gap"])
        rows.append({"iter": e["iter"], "gap": e["gap"], "rel_gap": e["gap"] / scale if scale else None,
                     "best_gap": best, "f": e["f"], "alpha": e["alpha"]})
    files = [io.write_table(out.path("metrics.csv"), "pca-metrics", rows),
             io.write_table(out.path("timing.csv"), "timing",
                            [(e["iter"], e["elapsed_ms"]) for e in trace.epochs]),
             io.write_matrix(out.path("U.csv"), U)]
    if trace.objective and estimate_G(trace) > 0:
        # chordal diameter of St(k, d); curvature hypothesis not met, so labeled empirical
        p = BoundParams(N=1, G=estimate_G(trace), D=2 * math.sqrt(cfg.k), kappas=[0.0],
                        epsilon=cfg.eps, schedule=sched, zeta_variant=cfg.zeta_variant,
                        empirical=True)
        measured = averaged_suboptimality(trace.objective, oracle.f_value)
        files.append(_write_bounds(out, cfg, p, _log_points(cfg.iterations, cfg.log_every), measured))
    last = rows[-1]
    rel = f"{last['rel_gap']:.3e}" if last["rel_gap"] is not None else "n/a"
    summary = (f"pca {cfg.optimizer}: n={prob.n} d={prob.d} k={prob.k}, {cfg.iterations} iterations, "
               f"gap {last['gap']:.3e} (relative {rel}), best {last['best_gap']:.3e}")
    return files, summary, rows


def run_toy(cfg, out):
    prob = make_toy(cfg.components, cfg.dim, cfg.seed)
    sched = cfg.make_schedule()
    record = "components" if cfg.trace_components else "steps"
    x, trace = train_toy(prob, cfg.optimizer, sched, cfg.iterations, cfg.seed,
                         accumulate_epsilon=cfg.accumulate_epsilon, record=record)
    _check_finite(x)
    files, rows = [], []
    pts = _log_points(cfg.iterations, cfg.log_every)
    if cfg.iterations:
        avg = averaged_suboptimality(trace.objective, prob.f_star)
        rows = [{"iter": n, "f": trace.objective[n - 1], "avg_subopt": avg[n - 1],
                 "alpha": trace.alpha[n - 1], "beta1": trace.beta1[n - 1]} for n in pts]
    files.append(io.write_table(out.path("metrics.csv"), "toy-metrics", rows))
    files.append(io.write_matrix(out.path("x.csv"), x))
    if cfg.iterations:
        p = BoundParams(N=prob.n_components, G=prob.gradient_bound(), D=prob.diameter(),
                        kappas=[-1.0] * prob.n_components, epsilon=cfg.eps, schedule=sched,
                        zeta_variant=cfg.zeta_variant)
        files.append(_write_bounds(out, cfg, p, pts, avg))
    if cfg.trace_components and trace.grad_norm:
        files.append(_write_component_trace(out.path("trace.csv"), trace))
    summary = (f"toy {cfg.optimizer}: {cfg.components} components, {cfg.iterations} iterations, "
               + (f"f {rows[-1]['f']:.3e}, averaged suboptimality {rows[-1]['avg_subopt']:.3e}"
                  if rows else "no steps"))
    return files, summary, rows


def _write_component_trace(path, trace):
    g = trace.component_array("grad_norm")
    m = trace.component_array("m_norm") if trace.m_norm else None
    s = trace.component_array("sqrt_vhat") if trace.sqrt_vhat else None
    rows = []
    for t in range(g.shape[0]):
        for i in range(g.shape[1]):
            rows.append((t + 1, i, g[t, i], None if m is None else m[t, i],
                         None if s is None else s[t, i], trace.beta1[t]))
    meta = {"optimizer": trace.kind, "accumulate_epsilon": trace.accumulate_epsilon}
    return io.write_table(path, "component-trace", rows, meta=meta)


def read_component_trace(path):
    """Rebuild a :class:`RunTrace` with per-component records from CSV."""
    schema, meta, _, rows = io.read_table(path)
    if schema != "component-trace":
        raise io.TableFormatError(f"{path}: expected a component-trace table, got {schema}")
    if not rows:
        raise io.TableFormatError(f"{path}: empty trace")
    T = max(r["t"] for r in rows)
    N = max(r["component"] for r in rows) + 1
    g, s = np.zeros((T, N)), np.zeros((T, N))
    beta1 = [0.0] * T
    for r in rows:
        t, i = r["t"] - 1, r["component"]
        g[t, i] = r["grad_norm"]
        s[t, i] = r["sqrt_vhat"] if r["sqrt_vhat"] is not None else 0.0
        beta1[t] = r["beta1"]
    return RunTrace(kind=meta.get("optimizer", "ramsgrad"),
                    accumulate_epsilon=bool(meta.get("accumulate_epsilon", 0)),
                    beta1=beta1, grad_norm=list(g), sqrt_vhat=list(s))


RUNNERS = {"embed": run_embed, "pca": run_pca, "toy": run_toy}


def run_experiment(cfg):
    """Run one validated experiment, writing its outputs under ``cfg.out``.

    On failure every file this run created is removed before the error
    propagates.
    """
    cfg.validate(warn=False)
    out = _Outputs(cfg.out)
    try:
        files, summary, rows = RUNNERS[cfg.task](cfg, out)
    except BaseException:
        out.discard()
        raise
    files = [str(f) for f in files if f is not None]
    return RunResult(EXIT_OK, files, summary, rows)


MATRIX_COLUMNS = {"embed": ("epoch", ("mean_loss", "map")),
                  "pca": ("iter", ("gap",)),
                  "toy": ("iter", ("avg_subopt",))}


def run_matrix(template, variants, out=None):
    """Run every variant with the template's seed and data.

    Each variant writes under ``<out>/<name>``.  Failures are recorded in
    ``status.csv`` and do not stop the remaining variants.  Returns the
    overall exit status and the comparison CSV path.
    """
    if not variants:
        raise ConfigError("matrix needs at least one variant")
    root = Path(out or template.out)
    root.mkdir(parents=True, exist_ok=True)
    key, metrics = MATRIX_COLUMNS[template.task]
    status_rows, results = [], {}
    for name, overrides in variants:
        try:
            cfg = replace(template, out=str(root / name), **overrides).validate()
            res = run_experiment(cfg)
        except Exception as e:  # recorded; other variants proceed
            code = exit_code_for(e)
            logger.error("variant %s failed: %s", name, e)
            status_rows.append((name, "failed", code, str(e)))
            continue
        results[name] = {row[key]: row for row in res.metrics}
        status_rows.append((name, "ok", EXIT_OK, res.summary))
        print(f"{name}: {res.summary}")
    keys = sorted(set().union(*[set(v) for v in results.values()]) if results else set())
    columns = [key] + [f"{n}:{m}" for n in results for m in metrics]
    rows = []
    for k in keys:
        row = {key: k}
        for n, by_key in results.items():
            for m in metrics:
                row[f"{n}:{m}"] = by_key.get(k, {}).get(m)
        rows.append(row)
    comparison = io.write_table(root / "comparison.csv", "comparison", rows, columns=columns,
                                meta={"task": template.task})
    io.write_table(root / "status.csv", "matrix-status", status_rows,
                   columns=("variant", "status", "exit_code", "message"))
    failed = sum(1 for r in status_rows if r[1] != "ok")
    return (EXIT_RUNTIME if failed else EXIT_OK), str(comparison), failed


def run_eval(ns):
    table = io.read_embedding(ns.embedding)
    r = _load_relations(ns.data, ns.closure)
    index = {s: i for i, s in enumerate(table.nouns)}
    missing = [s for s in r.nouns if s not in index]
    if missing:
        raise ValueError(f"embedding lacks {len(missing)} nouns, e.g. {missing[0]!r}")
    coords = table.coords[[index[s] for s in r.nouns]]
    if np.any(np.sum(coords**2, axis=1) >= 1):
        raise DomainError("embedding has points outside the unit ball")
    ev = evaluate_reconstruction(coords, r)
    if ns.out:
        Path(ns.out).mkdir(parents=True, exist_ok=True)
        io.write_table(Path(ns.out) / "eval.csv", "eval", [(ev.mean_rank, ev.map, len(r))],
                       columns=("mean_rank", "map", "n_pairs"))
    return f"eval: {len(r)} pairs, MAP {ev.map:.4f}, mean rank {ev.mean_rank:.3f}"


def run_bounds(ns):
    try:
        sched = Schedule(kind=ns.schedule, alpha0=ns.alpha, eta=ns.eta, beta1=ns.beta1,
                         beta1_kind=ns.beta1_kind, beta2=ns.beta2, eps=ns.eps)
    except ScheduleError as e:
        raise ConfigError(str(e)) from None
    if ns.D is None or ns.D <= 0:
        raise ConfigError("--D must be positive")
    if ns.theorem == 1:
        if ns.G is None or ns.G <= 0:
            raise ConfigError("--theorem 1 needs a positive --G")
        if ns.eps <= 0:
            raise ConfigError("--theorem 1 needs --eps > 0")
        if ns.N < 1:
            raise ConfigError("--N must be >= 1")
        ns_list = [int(v) for v in ns.n]
        if any(v < 1 or v != f for v, f in zip(ns_list, ns.n)):
            raise ConfigError("--n values must be positive integers")
        p = BoundParams(N=ns.N, G=ns.G, D=ns.D, kappas=[ns.kappa] * ns.N, epsilon=ns.eps,
                        schedule=sched, zeta_variant=ns.zeta_variant)
        curve = theorem1_curve(p, ns_list)
        rows, meta = _bound_rows(curve), _bound_meta(p, curve)
    else:
        if not ns.trace:
            raise ConfigError("--theorem 2 needs --trace")
        trace = read_component_trace(ns.trace)
        N = trace.component_array("grad_norm").shape[1]
        p = BoundParams(N=N, G=1.0, D=ns.D, kappas=[ns.kappa] * N, epsilon=ns.eps,
                        schedule=sched, zeta_variant=ns.zeta_variant)
        Ts = [int(t) for t in (ns.T or (len(trace.beta1),))]
        rows = []
        for T in Ts:
            b = theorem2_regret_bound(trace, p, ns.alpha, T)
            rows.append({"n": T, "term1": b.term1, "term2": b.term2, "term3": b.term3,
                         "total": b.total, "measured": None})
        meta = {"bound": "theorem2", "alpha": ns.alpha, "beta1": ns.beta1, "beta2": ns.beta2,
                "D": ns.D, "kappa": ns.kappa, "zeta_variant": ns.zeta_variant}
    if ns.output:
        io.write_table(ns.output, "bound-report", rows, meta=meta)
    else:
        cols = io.SCHEMAS["bound-report"]
        print(",".join(cols))
        for r in rows:
            print(",".join(io._fmt(r[c]) for c in cols))
    return f"bounds: theorem {ns.theorem}, {len(rows)} rows, last total {rows[-1]['total']:.6g}"


def exit_code_for(exc):
    if isinstance(exc, (ConfigError, ScheduleError)):
        return EXIT_CONFIG
    if isinstance(exc, (OSError, io.TableFormatError, EdgeListError)):
        return EXIT_IO
    return EXIT_RUNTIME


def main(argv=None, env=None):
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.WARNING, format="riemopt: %(levelname)s: %(message)s")
    argv = sys.argv[1:] if argv is None else argv
    try:
        command, payload = parse_config(argv, env)
        if command in TASKS:
            res = run_experiment(payload)
            print(f"{res.summary} -> {payload.out}")
            return res.status
        if command == "matrix":
            template, variants = payload
            status, comparison, failed = run_matrix(template, variants)
            print(f"matrix: {len(variants)} variants, {failed} failed -> {comparison}")
            return status
        if command == "eval":
            print(run_eval(payload))
            return EXIT_OK
        summary = run_bounds(payload)
        if payload.output:
            print(summary)
        return EXIT_OK
    except SystemExit as e:  # argparse usage errors
        return e.code if isinstance(e.code, int) else EXIT_CONFIG
    except (ConfigError, ScheduleError, OSError, io.TableFormatError, EdgeListError,
            ValueError, ArithmeticError, DomainError, RankDeficiencyError,
            np.linalg.LinAlgError) as e:
        code = exit_code_for(e)
        kind = {EXIT_CONFIG: "config error", EXIT_IO: "I/O error"}.get(code, "error")
        print(f"riemopt: {kind}: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())

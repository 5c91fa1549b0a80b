"""Benchmark protocols: performance sweep, scalability study, and the
initial-condition / forcing reparametrization study.

Experiment configs are plain JSON; head schedules can be given explicitly or
by the built-in names ("table1", "scalability", "repar") that carry the
published training-head layouts.
"""

import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .equations import forcing_values, instantiate, linearize
from .errors import ConfigError
from .metrics import relative_errors
from .network import batch_features
from .results import MetricsRow, render_error_plot, write_rows
from .solvers import Tolerances, godunov_split_solve, radau_solve, rk45_solve
from .training import (
    HeadConfig,
    LossConfig,
    TrainConfig,
    boundary_values,
    train,
    train_vanilla,
)
from .transfer import (
    assemble_operator,
    freeze_features,
    solve_cascade,
    solve_weights,
)

# --- published head schedules -------------------------------------------------

_TABLE1 = {
    "oho": [{"alpha": a, "y0": [1.0, 0.5]} for a in range(2, 21, 2)],
    "ncff": [{"alpha": a, "y0": [2.0, 4.0], "omega": 1.0} for a in range(2, 21, 2)],
    "duffing": [
        {"alpha": a, "y0": [1.0, 0.5], "beta": 0.5} for a in range(13, 41, 3)
    ],
    "ar": [{"alpha": a, "y0max": 1.0} for a in (3, 6, 8, 12)],
}

_SCALABILITY = {
    "oho": [
        list(range(1, 11)),
        [1, 3, 5, 7, 9, 11, 12, 13, 14, 15],
        list(range(2, 21, 2)),
        [1, 5, 9, 13, 15, 17, 19, 21, 23, 25],
    ],
    "ncff": [list(range(1, 11)), list(range(2, 21, 2)), list(range(3, 31, 3))],
    "duffing": [
        list(range(11, 21)),
        list(range(12, 31, 2)),
        list(range(13, 41, 3)),
    ],
    "ar": [[1, 2, 3, 4], [3, 6, 9, 12]],
}

_REPAR_HEADS = {
    "oho": [
        {"alpha": a, "y0": [y1, y2]}
        for a, y1, y2 in zip(
            range(2, 21, 2),
            [0.59, 1.1, 1.4, 2.9, 3.7, 4.2, 4.1, 0.30, 2.2, 1.7],
            [1.5, 3.3, 3.7, 3.3, 3.1, 4.7, 0.59, 3.9, 0.86, 1.3],
        )
    ],
    "ncff": [
        {"alpha": a, "y0": [2.0, 4.0], "omega": w}
        for a, w in zip(
            range(2, 21, 2),
            [2.3, 0.49, 0.059, 0.12, 0.98, 3.1, 0.82, 1.1, 0.67, 2.7],
        )
    ],
    "duffing": [
        {"alpha": a, "y0": [y1, y2], "beta": 0.5}
        for a, y1, y2 in zip(
            range(13, 41, 3),
            [1.9, 1.4, 1.7, 0.62, 0.58, 1.1, 0.63, 0.50, 1.7, 1.4],
            [0.59, 0.62, 0.19, 0.32, 0.34, 0.81, 0.51, 0.26, 0.81, 0.43],
        )
    ],
    "ar": [
        {"alpha": a, "y0max": m}
        for a, m in zip((3, 6, 8, 12), [0.50, 1.0, 1.5, 2.0])
    ],
}

# Reparametrization sampling ranges.
_REPAR_RANGES = {
    "oho": {"y0": ([0.0, 5.0], [0.0, 5.0])},
    "duffing": {"y0": ([0.5, 2.0], [0.0, 1.0])},
    "ar": {"y0max": [0.5, 2.0]},
    "ncff": {"omega": [0.0, np.pi]},
}


@dataclass
class ExperimentConfig:
    family: str
    schedule: object = "table1"  # name or explicit list of head param dicts
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    alphas: list = field(default_factory=lambda: [10, 25, 50, 100, 150, 200])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    eval_points: int = 512
    methods: list = field(default_factory=lambda: ["stl", "rk45", "radau"])
    with_vanilla: bool = False
    p: int = 5  # perturbation order for the nonlinear family
    ref_rtol: float = 1e-10
    solver_rtol: float = 1e-8
    scalability_models: list = field(default_factory=lambda: [0, 2])
    repar_alpha: float = 150.0
    repar_samples: int = 1000
    repar_seed: int = 0

    def head_params(self):
        if isinstance(self.schedule, str):
            if self.schedule == "table1":
                return _TABLE1[self.family]
            if self.schedule == "repar":
                return _REPAR_HEADS[self.family]
            raise ConfigError(f"unknown schedule name {self.schedule!r}")
        return self.schedule

    def target_params(self):
        """Parameter set used at transfer time (first Table-1 head's, minus
        alpha)."""
        base = dict(_TABLE1[self.family][0])
        base.pop("alpha")
        return base


_LOSS_KEYS = {f.name for f in dataclasses.fields(LossConfig)}
_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}
_TOP_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def load_config(path) -> ExperimentConfig:
    """Read and validate an experiment config; unknown keys are rejected."""
    with open(path) as fh:
        doc = json.load(fh)
    return config_from_dict(doc)


def config_from_dict(doc) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "family" not in doc:
        raise ConfigError("config requires a 'family' key")
    doc = dict(doc)
    loss = doc.pop("loss", {})
    train_d = doc.pop("train", {})
    for name, sub, allowed in (("loss", loss, _LOSS_KEYS),
                               ("train", train_d, _TRAIN_KEYS)):
        bad = set(sub) - allowed
        if bad:
            raise ConfigError(f"unknown {name} keys: {sorted(bad)}")
    if "grid_shape" in loss:
        loss["grid_shape"] = tuple(loss["grid_shape"])
    cfg = ExperimentConfig(
        loss=LossConfig(**loss), train=TrainConfig(**train_d), **doc
    )
    if cfg.family not in _TABLE1:
        raise ConfigError(f"unknown family {cfg.family!r}")
    return cfg


def config_hash(cfg: ExperimentConfig, extra=None):
    doc = dataclasses.asdict(cfg)
    if extra is not None:
        doc["extra"] = extra
    blob = json.dumps(doc, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _pool_map(fn, items):
    workers = int(os.environ.get("STL_THREADS", "1"))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _make_heads(cfg: ExperimentConfig, params_list):
    heads = []
    for hp in params_list:
        hp = dict(hp)
        alpha = hp.pop("alpha")
        heads.append(HeadConfig(problem=instantiate(cfg.family, alpha, hp)))
    return heads


def _train_checkpoint(cfg: ExperimentConfig, seed, params_list=None):
    heads = _make_heads(cfg, params_list or cfg.head_params())
    traincfg = dataclasses.replace(cfg.train, seed=seed)
    return train(heads, cfg.loss, traincfg)


def _eval_grid(cfg: ExperimentConfig, spec):
    if spec.is_ode:
        t = np.linspace(0.0, spec.T, cfg.eval_points)
        return t, None, t[:, None]
    nt, nx = cfg.loss.grid_shape
    t = np.linspace(0.0, spec.T, nt)
    x = np.linspace(0.0, spec.L[0], nx)
    tt, xx = np.meshgrid(t, x, indexing="ij")
    return t, x, np.column_stack([tt.ravel(), xx.ravel()])


def _reference(cfg: ExperimentConfig, spec, t, x):
    if spec.is_ode:
        sol = radau_solve(spec, Tolerances(rtol=cfg.ref_rtol, atol=cfg.ref_rtol), t)
        return sol.y, sol
    sol = godunov_split_solve(spec, (t, x))
    return sol.y, sol


def _stl_transfer(cfg, ckpt, ff, target):
    """Assemble + solve at one target; returns (u_fn weights solution, wall)."""
    lin = linearize(target) if target.nonlinearity is not None else target
    t0 = time.perf_counter()
    op = assemble_operator(
        ff, lin.A, lin.B, lin.C, ckpt.loss_config.omega1, ckpt.loss_config.omega2
    )
    if target.nonlinearity is not None:
        sol = solve_cascade(op, target, cfg.p)
    else:
        sol = solve_weights(
            op,
            forcing_values(target, ff.colloc.interior),
            boundary_values(target, ff.colloc),
        )
    wall = time.perf_counter() - t0
    return sol, wall


def _metrics(u, ref):
    return relative_errors(u, ref)


def run_performance(cfg: ExperimentConfig, out_dir):
    """Error and timing sweep over the transfer stiffness range.

    Per seed: train one multi-head checkpoint on the schedule, then for each
    alpha report the transfer solution against the reference solver, plus
    the reference solvers' own cost rows. The vanilla per-alpha baseline is
    opt-in since it retrains at every point.
    """
    os.makedirs(out_dir, exist_ok=True)
    chash = config_hash(cfg)
    rows = []
    for seed in cfg.seeds:
        ckpt = None
        ff = None
        if "stl" in cfg.methods or cfg.with_vanilla:
            ckpt = _train_checkpoint(cfg, seed)
            ff = freeze_features(ckpt)

        def one_alpha(alpha, seed=seed, ckpt=ckpt, ff=ff):
            out = []
            target = instantiate(cfg.family, alpha, cfg.target_params())
            t, x, pts = _eval_grid(cfg, target)
            ref, _ = _reference(cfg, target, t, x)
            shape = ref.shape
            if "stl" in cfg.methods:
                sol, wall = _stl_transfer(cfg, ckpt, ff, target)
                u = sol.u(pts).reshape(shape)
                out.append(MetricsRow(cfg.family, alpha, "stl",
                                      *_metrics(u, ref), wall, seed, chash))
            tol = Tolerances(rtol=cfg.solver_rtol, atol=cfg.solver_rtol)
            if "rk45" in cfg.methods and target.is_ode:
                s = rk45_solve(target, tol, t)
                out.append(MetricsRow(cfg.family, alpha, "rk45",
                                      *_metrics(s.y, ref), s.wall_clock_s,
                                      seed, chash))
            if "radau" in cfg.methods and target.is_ode:
                s = radau_solve(target, tol, t)
                out.append(MetricsRow(cfg.family, alpha, "radau",
                                      *_metrics(s.y, ref), s.wall_clock_s,
                                      seed, chash))
            if "lw-radau" in cfg.methods and not target.is_ode:
                s = godunov_split_solve(target, (t, x), reaction="radau")
                out.append(MetricsRow(cfg.family, alpha, "lw-radau",
                                      *_metrics(s.y, ref), s.wall_clock_s,
                                      seed, chash))
            if cfg.with_vanilla:
                t0 = time.perf_counter()
                v_ckpt = train_vanilla(
                    linearize(target) if target.nonlinearity else target,
                    cfg.loss, dataclasses.replace(cfg.train, seed=seed),
                )
                v_wall = time.perf_counter() - t0
                # the vanilla solution is the trained head's own output
                h, _ = batch_features(v_ckpt.net, pts)
                u = np.hstack([h, np.ones((h.shape[0], 1))]) @ v_ckpt.heads[0]
                out.append(MetricsRow(cfg.family, alpha, "vanilla",
                                      *_metrics(u.reshape(shape), ref),
                                      v_wall, seed, chash))
            return out

        for chunk in _pool_map(one_alpha, cfg.alphas):
            rows.extend(chunk)

    rows.sort(key=lambda r: (r.seed, r.alpha, r.method))
    csv_path = os.path.join(out_dir, "performance.csv")
    write_rows(rows, csv_path)
    if rows:
        render_error_plot(rows, os.path.join(out_dir, "performance_l2.svg"))
    return rows


def run_scalability(cfg: ExperimentConfig, out_dir):
    """Transfer error sweeps for checkpoints trained on increasing alpha
    ranges. Model identity is carried in the config hash; a sidecar JSON
    maps hashes to the training alpha_max."""
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    labels = {}
    base = cfg.target_params()
    for model_idx in cfg.scalability_models:
        schedule_alphas = _SCALABILITY[cfg.family][model_idx]
        params_list = [dict(base, alpha=a) for a in schedule_alphas]
        chash = config_hash(cfg, extra={"model": model_idx})
        labels[("stl", chash)] = f"alpha_max={max(schedule_alphas)}"
        for seed in cfg.seeds:
            ckpt = _train_checkpoint(cfg, seed, params_list)
            ff = freeze_features(ckpt)

            def one_alpha(alpha, seed=seed, ckpt=ckpt, ff=ff, chash=chash):
                target = instantiate(cfg.family, alpha, cfg.target_params())
                t, x, pts = _eval_grid(cfg, target)
                ref, _ = _reference(cfg, target, t, x)
                sol, wall = _stl_transfer(cfg, ckpt, ff, target)
                u = sol.u(pts).reshape(ref.shape)
                return MetricsRow(cfg.family, alpha, "stl",
                                  *_metrics(u, ref), wall, seed, chash)

            rows.extend(_pool_map(one_alpha, cfg.alphas))

    rows.sort(key=lambda r: (r.config_hash, r.seed, r.alpha))
    write_rows(rows, os.path.join(out_dir, "scalability.csv"))
    with open(os.path.join(out_dir, "scalability_models.json"), "w") as fh:
        json.dump({h: lbl for (_, h), lbl in labels.items()}, fh, indent=2)
    if rows:
        render_error_plot(rows, os.path.join(out_dir, "scalability_l2.svg"),
                          labels=labels)
    return rows


def _sample_repar(cfg, rng):
    fam = cfg.family
    ranges = _REPAR_RANGES[fam]
    if fam in ("oho", "duffing"):
        (lo1, hi1), (lo2, hi2) = ranges["y0"]
        return {"y0": [rng.uniform(lo1, hi1), rng.uniform(lo2, hi2)]}
    if fam == "ar":
        lo, hi = ranges["y0max"]
        return {"y0max": rng.uniform(lo, hi)}
    lo, hi = ranges["omega"]
    return {"omega": rng.uniform(lo, hi)}


def run_reparametrization(cfg: ExperimentConfig, out_dir):
    """Many-query protocol: one operator at the target stiffness, then
    RHS-only solves over sampled initial conditions / forcing parameters,
    each checked against its own reference solve."""
    os.makedirs(out_dir, exist_ok=True)
    chash = config_hash(cfg, extra="repar")
    ckpt = _train_checkpoint(cfg, cfg.train.seed, _REPAR_HEADS[cfg.family])
    ff = freeze_features(ckpt)
    base = cfg.target_params()
    target0 = instantiate(cfg.family, cfg.repar_alpha, base)
    lin0 = linearize(target0) if target0.nonlinearity else target0
    t_assemble = time.perf_counter()
    op = assemble_operator(ff, lin0.A, lin0.B, lin0.C,
                           ckpt.loss_config.omega1, ckpt.loss_config.omega2)
    t_assemble = time.perf_counter() - t_assemble

    rng = np.random.default_rng(cfg.repar_seed)
    samples = [_sample_repar(cfg, rng) for _ in range(cfg.repar_samples)]

    def one_sample(item):
        idx, overrides = item
        target = instantiate(cfg.family, cfg.repar_alpha, dict(base, **overrides))
        t, x, pts = _eval_grid(cfg, target)
        t0 = time.perf_counter()
        if target.nonlinearity is not None:
            sol = solve_cascade(op, target, cfg.p)
        else:
            sol = solve_weights(
                op,
                forcing_values(target, ff.colloc.interior),
                boundary_values(target, ff.colloc),
            )
        solve_t = time.perf_counter() - t0
        u = sol.u(pts)
        ref, _ = _reference(cfg, target, t, x)
        mae = float(np.mean(np.abs(u.reshape(ref.shape) - ref)))
        return MetricsRow(cfg.family, cfg.repar_alpha, "stl", 0.0, 0.0, 0.0,
                          mae, solve_t, idx, chash)

    rows = _pool_map(one_sample, list(enumerate(samples)))
    write_rows(rows, os.path.join(out_dir, "reparametrization.csv"))

    mean_mae = float(np.mean([r.mae for r in rows]))
    mean_solve = float(np.mean([r.wall_clock_s for r in rows]))
    summary = MetricsRow(cfg.family, cfg.repar_alpha, "stl", 0.0, 0.0, 0.0,
                         mean_mae, mean_solve, -1, chash)
    write_rows([summary], os.path.join(out_dir, "reparametrization_summary.csv"))
    return rows, {"mean_mae": mean_mae, "mean_solve_s": mean_solve,
                  "assemble_s": t_assemble}

"""Experiment runner: dispatch a validated config, emit traces, bounds
and summaries, compare algorithms on a shared problem."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .config import RunConfig
from .errors import BoundViolationError, ConfigError
from .problems import estimate_fed_constants
from .theory import (
    AcceleratedConstants,
    BoundSeries,
    RecursionSpec,
    accelerated_bound,
    deterministic_bound,
    fed_bound,
    recursion_bound,
    sgd_squared_bound,
)
from .trace import RunTrace

__all__ = ["RunResult", "execute", "compute_bound", "cmd_run", "cmd_compare"]

ACCURACY_THRESHOLDS = tuple(10.0**-k for k in range(2, 9))


@dataclass
class RunResult:
    config: RunConfig
    traces: list[RunTrace]
    bound: BoundSeries | None
    violation: BoundViolationError | None = None
    files: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.violation is None

    def summary(self) -> dict:
        tr = self.traces[0]
        thresholds = {}
        for thr in ACCURACY_THRESHOLDS:
            bits = tr.bits_to_accuracy(thr)
            thresholds[f"{thr:.0e}"] = bits if bits is not None else "unreached"
        out = {
            "algorithm": self.config.algorithm,
            "mc_runs": len(self.traces),
            "final_dist": tr.dist[-1],
            "final_fgap": tr.fgap[-1],
            "total_bits": tr.total_bits,
            "bits_to_accuracy": thresholds,
            "bounds_ok": self.ok,
            "warnings": list(self.config.warnings),
        }
        if len(self.traces) > 1:
            sq = np.stack([t.dist**2 for t in self.traces])
            out["final_mean_sq_dist"] = float(sq[:, -1].mean())
        if not self.ok:
            out["violation"] = {
                "kind": self.violation.kind,
                "t": self.violation.t,
                "observed": repr(self.violation.observed),
                "allowed": repr(self.violation.allowed),
            }
        return out


def execute(cfg: RunConfig) -> RunResult:
    """Run the configured algorithm; envelope violations are captured,
    not raised, so the caller can report the offending row."""
    algo, rn, qt, fd = cfg.algorithm, cfg.run, cfg.quant, cfg.fed
    seed = rn["master_seed"]
    mode = rn["counting_mode"]
    w0 = np.asarray(rn["w0"], dtype=float) if rn["w0"] is not None else None
    fb = qt["float_bits"]
    violation = None
    try:
        if algo == "deed-gd":
            traces = [
                engine.run_deed_gd(
                    cfg.problem, cfg.eta, qt["c_prime"], qt["s"], rn["iterations"],
                    seed, mode, float_bits=fb, w0=w0,
                )
            ]
        elif algo == "a-deed-gd":
            traces = [
                engine.run_adeed_gd(
                    cfg.problem, qt["c_prime"], qt["s"], rn["iterations"],
                    seed, mode, float_bits=fb, w0=w0,
                )
            ]
        elif algo == "gd":
            traces = [
                engine.run_exact_gd(
                    cfg.problem, cfg.eta, rn["iterations"], mode,
                    float_bits=fb, w0=w0, seed=seed,
                )
            ]
        elif algo == "agd":
            traces = [
                engine.run_exact_agd(
                    cfg.problem, rn["iterations"], mode, float_bits=fb, w0=w0, seed=seed
                )
            ]
        elif algo == "const-quant-gd":
            traces = [
                engine.run_const_error_gd(
                    cfg.problem, cfg.eta, rn["iterations"], qt["fixed_eps"], mode,
                    seed, float_bits=fb, w0=w0,
                )
            ]
        elif algo == "deed-sgd":
            traces = engine.run_deed_sgd(
                cfg.problem, qt["c_prime"], qt["s"], rn["iterations"], seed, mode,
                rn["mc_runs"], rho=cfg.rho, float_bits=fb, w0=w0,
            )
        elif algo == "deed-fed":
            traces = engine.run_deed_fed(
                cfg.problem, fd["local_steps"], fd["beta"], fd["gamma"], qt["s"],
                rn["rounds"], fd["participation"], fd["k_participants"], seed, mode,
                rn["mc_runs"], trajectory_radius=fd["trajectory_radius"],
                float_bits=fb, w0=w0,
            )
        else:  # pragma: no cover - config layer rejects unknown tags
            raise ConfigError([f"unknown algorithm {algo!r}"])
    except BoundViolationError as exc:
        # Re-run without assertions to deliver the offending trace.
        violation = exc
        traces = _rerun_unchecked(cfg)

    return RunResult(config=cfg, traces=traces, bound=compute_bound(cfg), violation=violation)


def _rerun_unchecked(cfg: RunConfig) -> list[RunTrace]:
    algo, rn, qt, fd = cfg.algorithm, cfg.run, cfg.quant, cfg.fed
    seed, mode = rn["master_seed"], rn["counting_mode"]
    w0 = np.asarray(rn["w0"], dtype=float) if rn["w0"] is not None else None
    fb = qt["float_bits"]
    if algo == "deed-gd":
        return [
            engine.run_deed_gd(
                cfg.problem, cfg.eta, qt["c_prime"], qt["s"], rn["iterations"],
                seed, mode, float_bits=fb, w0=w0, assert_envelope=False,
            )
        ]
    if algo == "a-deed-gd":
        return [
            engine.run_adeed_gd(
                cfg.problem, qt["c_prime"], qt["s"], rn["iterations"], seed, mode,
                float_bits=fb, w0=w0, assert_envelope=False,
            )
        ]
    if algo == "deed-sgd":
        return engine.run_deed_sgd(
            cfg.problem, qt["c_prime"], qt["s"], rn["iterations"], seed, mode,
            rn["mc_runs"], rho=cfg.rho, float_bits=fb, w0=w0, assert_envelope=False,
        )
    if algo == "deed-fed":
        return engine.run_deed_fed(
            cfg.problem, fd["local_steps"], fd["beta"], fd["gamma"], qt["s"],
            rn["rounds"], fd["participation"], fd["k_participants"], seed, mode,
            rn["mc_runs"], trajectory_radius=fd["trajectory_radius"],
            float_bits=fb, w0=w0, assert_envelope=False,
        )
    raise AssertionError(f"unexpected violation for {algo}")  # pragma: no cover


def compute_bound(cfg: RunConfig) -> BoundSeries | None:
    """The theoretical envelope matching a config, or None when the
    configuration sits outside the envelope's validity region."""
    problem, qt, rn = cfg.problem, cfg.quant, cfg.run
    w0 = (
        np.asarray(rn["w0"], dtype=float)
        if rn["w0"] is not None
        else np.zeros(problem.d)
    )
    D0 = float(np.linalg.norm(w0 - problem.w_star))
    if cfg.algorithm == "deed-gd":
        c = 1.0 - cfg.eta * problem.mu
        if not c < qt["c_prime"]:
            return None
        return deterministic_bound(c, qt["c_prime"], cfg.eta, qt["s"], D0, rn["iterations"])
    if cfg.algorithm == "a-deed-gd":
        c = math.sqrt(1.0 - math.sqrt(problem.mu / problem.L))
        if not 0.0 < c < qt["c_prime"]:
            return None
        Delta = problem.f_gap(w0) + 0.5 * problem.mu * D0**2
        consts = AcceleratedConstants.from_run_params(
            problem.L, problem.mu, c, qt["c_prime"], qt["s"], Delta
        )
        return accelerated_bound(consts, problem.mu, c, qt["c_prime"], rn["iterations"])
    if cfg.algorithm == "deed-sgd":
        c = 1.0 - problem.mu / (cfg.rho * problem.L)
        return sgd_squared_bound(c, qt["c_prime"], cfg.eta, qt["s"], D0, rn["iterations"])
    if cfg.algorithm == "deed-fed":
        fd = cfg.fed
        radius = fd["trajectory_radius"] or 2.0 * D0
        fed = estimate_fed_constants(
            problem,
            fd["local_steps"],
            fd["k_participants"] or problem.N,
            fd["participation"],
            radius,
        )
        return fed_bound(
            fed, fd["beta"], fd["gamma"], problem.mu, qt["s"], D0,
            rn["rounds"] * fd["local_steps"],
        )
    if cfg.algorithm in ("gd", "agd"):
        # Noiseless contraction envelope on the squared distance.
        if cfg.algorithm == "gd":
            c = 1.0 - cfg.eta * problem.mu
        else:
            c = math.sqrt(1.0 - math.sqrt(problem.mu / problem.L))
            if c == 0.0:
                return None
        T = rn["iterations"]
        return recursion_bound(RecursionSpec(np.full(T, c), np.zeros(T), D0), T)
    if cfg.algorithm == "const-quant-gd":
        c = 1.0 - cfg.eta * problem.mu
        T = rn["iterations"]
        alpha = cfg.eta * qt["fixed_eps"]
        return recursion_bound(RecursionSpec(np.full(T, c), np.full(T, alpha), D0), T)
    return None


def cmd_run(cfg: RunConfig, out_dir: str | None = None) -> RunResult:
    """Execute and write trace CSVs, an aligned bound CSV and summary.json.

    Output directory priority: argument, config ``output.dir``,
    ``DEEDSIM_OUT_DIR``, then ``./deedsim_out``.  Outputs are
    deterministic byte-for-byte for a fixed config.
    """
    out_dir = (
        out_dir
        or cfg.output_dir
        or os.environ.get("DEEDSIM_OUT_DIR")
        or "deedsim_out"
    )
    os.makedirs(out_dir, exist_ok=True)
    result = execute(cfg)

    if len(result.traces) == 1:
        path = os.path.join(out_dir, "trace.csv")
        result.traces[0].to_csv(path)
        result.files.append(path)
    else:
        for i, tr in enumerate(result.traces):
            path = os.path.join(out_dir, f"trace_run{i:03d}.csv")
            tr.to_csv(path)
            result.files.append(path)
        path = os.path.join(out_dir, "mean_squared.csv")
        sq = np.stack([t.dist**2 for t in result.traces])
        with open(path, "w", newline="\n") as fh:
            fh.write("t,mean_sq_dist,se\n")
            se = sq.std(axis=0, ddof=1) / math.sqrt(len(result.traces))
            for t in range(sq.shape[1]):
                fh.write(f"{t},{sq[:, t].mean():.17g},{se[t]:.17g}\n")
        result.files.append(path)

    if result.bound is not None:
        path = os.path.join(out_dir, "bound.csv")
        result.bound.to_csv(path)
        result.files.append(path)

    path = os.path.join(out_dir, "summary.json")
    with open(path, "w", newline="\n") as fh:
        json.dump(result.summary(), fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    result.files.append(path)
    return result


def cmd_compare(configs: list[RunConfig], check_order: bool = False) -> dict:
    """Run several configs on the *same* problem and tabulate cumulative
    bits to each accuracy threshold.

    With ``check_order`` the given config order must be nondecreasing in
    bits at every threshold all of them reach.
    """
    if len(configs) < 2:
        raise ConfigError(["compare needs at least two configs"])
    base = configs[0].problem_block
    for cfg in configs[1:]:
        if cfg.problem_block != base:
            raise ConfigError(
                ["compare requires identical problem blocks "
                 f"(got {cfg.problem_block} vs {base})"]
            )
    rows = []
    for cfg in configs:
        result = execute(cfg)
        tr = result.traces[0]
        cells = {}
        for thr in ACCURACY_THRESHOLDS:
            bits = tr.bits_to_accuracy(thr)
            cells[f"{thr:.0e}"] = bits
        rows.append(
            {
                "algorithm": cfg.algorithm,
                "bits_to_accuracy": cells,
                "total_bits": tr.total_bits,
                "bounds_ok": result.ok,
            }
        )
    table = {"thresholds": [f"{t:.0e}" for t in ACCURACY_THRESHOLDS], "rows": rows}

    if check_order:
        failures = []
        for key in table["thresholds"]:
            bits = [row["bits_to_accuracy"][key] for row in rows]
            if any(b is None for b in bits):
                continue
            if any(a > b for a, b in zip(bits, bits[1:])):
                failures.append(f"ordering violated at threshold {key}: {bits}")
        table["order_ok"] = not failures
        table["order_failures"] = failures
    return table

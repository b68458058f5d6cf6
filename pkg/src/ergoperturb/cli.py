"""Configuration-driven experiment runner.

Usage: ergoperturb <experiment> --config <path> [--out <dir>] [--validate-only]

Exit codes: 0 success, 1 invalid configuration, 2 numerical failure.
The output directory comes from ``--out``, else ERGOPERTURB_OUT_DIR, else
the ``out_dir`` config key.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .ar_model import (
    TAU_TRUNC,
    ARKernelSpec,
    build_kernel,
    drift_l_cap,
    run_counterexample,
    taylor_expansion,
)
from .ergodicity import estimate_rate, invariant_measure
from .errors import DomainError, NumericalError
from .kernel_calculus import certify_family
from .noise import NoiseModel, make_noise
from .perturbation import (
    check_holder_bound,
    check_lipschitz_bound,
    continuity_profile,
    kartashov_expansion,
    lipschitz_constant_bound,
)
from .simulation import RNG_NAME, mc_oracle
from .weighted_space import Grid, WeightSpec, dual_distance, uniform_grid

log = logging.getLogger("ergoperturb")

EXPERIMENTS = (
    "drift-certify",
    "rate-table",
    "continuity-profile",
    "holder-check",
    "lipschitz-check",
    "counterexample",
    "taylor-expansion",
    "kartashov-compare",
    "mc-oracle",
)
NOISE_FAMILIES = ("student_t", "gaussian")
ENV_OUT = "ERGOPERTURB_OUT_DIR"


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat key-value configuration shared by every experiment."""

    experiment: str
    n: int = 1000
    x_max: float | None = None
    r: float = 1.0
    beta: float = 1.0
    noise: str = "student_t"
    dof: float = 5.0
    sigma: float = 1.0
    scale: float = 1.0
    alpha0: float = 0.5
    alphas: list | None = None
    eps: list | None = None
    tau_trunc: float = TAU_TRUNC
    drift_N: int = 1
    l_cap: float | None = None
    rate_burn_in: int = 5
    rate_max_n: int = 200
    order: int = 1
    beta_r: float | None = None
    h: list | None = None
    kartashov_order: int = 8
    resolvent_bound: bool = False
    n_samples: int = 1_000_000
    burn_in: int = 1000
    seed: int | None = None
    n_chains: int = 1
    out_dir: str = "results"

    def echo(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_DEFAULT_ALPHAS = {
    "drift-certify": [-0.6, -0.3, 0.0, 0.3, 0.6],
    "rate-table": [0.3, 0.5, 0.7],
}


def _default_eps() -> list:
    return [0.2 * 2.0**-k for k in range(7)]


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def validate(raw: dict, experiment: str | None = None) -> tuple[ExperimentConfig | None, list[str]]:
    """Check a raw config mapping; returns (config, violations)."""
    errs: list[str] = []
    if not isinstance(raw, dict):
        return None, ["configuration must be a JSON object"]
    raw = dict(raw)
    if experiment is not None:
        if raw.get("experiment", experiment) != experiment:
            errs.append(f"config experiment {raw['experiment']!r} does not match {experiment!r}")
        raw["experiment"] = experiment
    for key in raw:
        if key not in _FIELDS:
            errs.append(f"unknown key {key!r}")
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        errs.append(f"experiment must be one of {', '.join(EXPERIMENTS)}; got {exp!r}")

    def get(k):
        return raw.get(k, _FIELDS[k].default)

    def need(cond, msg):
        if not cond:
            errs.append(msg)

    n = get("n")
    need(_int(n) and 8 <= n <= 5000, f"n must be an integer in [8, 5000], got {n!r}")
    xm = get("x_max")
    need(xm is None or (_num(xm) and xm > 0), f"x_max must be positive, got {xm!r}")
    r = get("r")
    need(_num(r) and r >= 1, f"r must be >= 1, got {r!r}")
    beta = get("beta")
    need(_num(beta) and 0 <= beta <= 1, f"beta must lie in [0, 1], got {beta!r}")
    need(get("noise") in NOISE_FAMILIES, f"noise must be one of {NOISE_FAMILIES}, got {get('noise')!r}")
    for k in ("dof", "sigma", "scale", "tau_trunc"):
        need(_num(get(k)) and get(k) > 0, f"{k} must be positive, got {get(k)!r}")
    a0 = get("alpha0")
    need(_num(a0) and -1 < a0 < 1, f"alpha0 must lie in (-1, 1), got {a0!r}")

    alphas = get("alphas")
    if alphas is not None:
        if not isinstance(alphas, list) or not alphas:
            errs.append("alphas must be a non-empty list")
        elif not all(_num(a) and -1 < a < 1 for a in alphas):
            errs.append("every alpha must lie in (-1, 1)")
    eps = get("eps")
    if eps is not None:
        if not isinstance(eps, list) or not eps:
            errs.append("eps must be a non-empty list")
        elif not all(_num(e) and e != 0 for e in eps):
            errs.append("every eps must be a nonzero number")
        elif _num(a0) and not all(-1 < a0 + e < 1 for e in eps):
            errs.append("alpha0 + eps must lie in (-1, 1) for every eps")
    h = get("h")
    if h is not None and (not isinstance(h, list) or not h or not all(_num(x) and x > 0 for x in h)):
        errs.append("h must be a non-empty list of positive steps")

    for k in ("drift_N", "rate_burn_in", "rate_max_n", "kartashov_order", "n_chains"):
        need(_int(get(k)) and get(k) >= 1, f"{k} must be a positive integer, got {get(k)!r}")
    need(_int(get("order")) and get("order") >= 0, f"order must be a non-negative integer")
    lc = get("l_cap")
    need(lc is None or (_num(lc) and lc > 0), f"l_cap must be positive, got {lc!r}")
    br = get("beta_r")
    need(br is None or (_num(br) and 0 < br < 1), f"beta_r must lie in (0, 1), got {br!r}")
    need(isinstance(get("resolvent_bound"), bool), "resolvent_bound must be true or false")
    need(isinstance(get("out_dir"), str) and get("out_dir"), "out_dir must be a non-empty string")

    if exp == "counterexample":
        if _num(a0):
            need(0 < a0 < 1, "counterexample needs alpha0 in (0, 1)")
        if alphas is None:
            need(eps is None or all(_num(e) and e > 0 for e in eps),
                 "counterexample needs eps > 0 (alphas decreasing to alpha0 from above)")
        elif isinstance(alphas, list) and alphas and all(_num(a) for a in alphas) and _num(a0):
            need(all(a > a0 for a in alphas) and all(b < a for a, b in zip(alphas, alphas[1:])),
                 "alphas must decrease towards alpha0 from above")
    if exp == "taylor-expansion" and _num(r):
        fr = math.floor(r)
        need(not float(r).is_integer(), "taylor-expansion needs a non-integer r")
        if _int(get("order")):
            need(1 <= get("order") <= fr, f"order must lie in 1..floor(r) = {fr}")
        if br is not None and _num(br):
            need(br < 1 - fr / r, f"beta_r must be below 1 - floor(r)/r = {1 - fr / r:.4g}")
    if exp == "mc-oracle":
        seed = get("seed")
        need(_int(seed) and seed >= 0, "mc-oracle needs a non-negative integer seed")
        ns, bi = get("n_samples"), get("burn_in")
        need(_int(bi) and bi >= 0, "burn_in must be a non-negative integer")
        need(_int(ns) and ns > 0 and (not _int(bi) or ns >= 10 * bi),
             "n_samples must be a positive integer >= 10 * burn_in")
    if errs:
        return None, errs
    return ExperimentConfig(**raw), []


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


class Runner:
    """Builds the shared objects of a configuration and runs one experiment."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Path):
        self.cfg = cfg
        self.out = out_dir
        self.warnings: list[str] = []
        self.files: list[str] = []
        self.noise = self._noise(cfg.r)
        self.grid = self._grid(self.noise)

    def _noise(self, r: float) -> NoiseModel:
        c = self.cfg
        if c.noise == "student_t":
            return make_noise("student_t", r, dof=c.dof, scale=c.scale)
        return make_noise("gaussian", r, sigma=c.sigma)

    def _grid(self, noise: NoiseModel) -> Grid:
        x_max = self.cfg.x_max
        if x_max is None:
            # quarter of the budget goes to the tails, plus a safety margin
            x_max = 1.05 * float(noise.law.isf(self.cfg.tau_trunc / 4))
        return uniform_grid(self.cfg.n, float(x_max))

    def warn(self, msg: str) -> None:
        log.warning(msg)
        self.warnings.append(msg)

    def kernel(self, alpha: float, noise: NoiseModel | None = None):
        return build_kernel(ARKernelSpec(alpha, noise or self.noise, self.grid), self.cfg.tau_trunc)

    @property
    def weight(self) -> WeightSpec:
        return WeightSpec(self.cfg.r, self.cfg.beta)

    def alphas(self) -> list[float]:
        c = self.cfg
        if c.alphas is not None:
            return [float(a) for a in c.alphas]
        if c.experiment in _DEFAULT_ALPHAS:
            return list(_DEFAULT_ALPHAS[c.experiment])
        return [c.alpha0 + e for e in self.eps()]

    def eps(self) -> list[float]:
        c = self.cfg
        return [float(e) for e in (c.eps if c.eps is not None else _default_eps())]

    def family(self) -> dict:
        """eps -> P_{alpha0 + eps}, including eps = 0."""
        a0 = self.cfg.alpha0
        fam = {0.0: self.kernel(a0)}
        for e in self.eps():
            fam[e] = self.kernel(a0 + e)
        return fam

    def header(self, extra=()) -> list[str]:
        lines = [
            f"ergoperturb {__version__}",
            f"experiment={self.cfg.experiment}",
            f"config={self.cfg.echo()}",
            f"grid n={self.grid.n} x_max={self.grid.x_max!r}",
        ]
        return lines + list(extra)

    def write_table(self, name: str, columns: list[str], rows, extra_header=()) -> None:
        path = self.out / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in self.header(extra_header):
                fh.write(f"# {line}\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(columns)
            for row in rows:
                wr.writerow([_fmt(v) for v in row])
        self.files.append(name)

    # experiments -------------------------------------------------------

    def drift_certify(self) -> dict:
        c = self.cfg
        w = WeightSpec(c.r, 1.0)
        l_cap = c.l_cap if c.l_cap is not None else drift_l_cap(self.noise, c.r)
        alphas = self.alphas()
        kernels = {a: self.kernel(a) for a in alphas}
        certs, common = certify_family(kernels, w, c.drift_N, l_cap)
        rows = [(a, certs[a].delta, certs[a].L, certs[a].residual, certs[a].certified) for a in alphas]
        self.write_table("drift.csv", ["alpha", "delta", "L", "residual", "certified"], rows)
        for a in alphas:
            if not certs[a].certified:
                self.warn(f"alpha = {a}: drift not certified ({certs[a].status})")
        return {
            "l_cap": l_cap,
            "common_delta": common.delta,
            "common_L": common.L,
            "common_residual": common.residual,
            "common_certified": common.certified,
            "max_delta_minus_abs_alpha": max(certs[a].delta - abs(a) for a in alphas),
        }

    def rate_table(self) -> dict:
        c = self.cfg
        rows, diag = [], []
        for a in self.alphas():
            est = estimate_rate(self.kernel(a), self.weight, c.rate_burn_in, c.rate_max_n)
            if est.status != "ok":
                self.warn(f"alpha = {a}: {est.status}")
            rows.append((a, est.kappa_hat, est.c_hat, est.residual, est.fit_window[0],
                         est.fit_window[1], est.status))
            diag += [(a, k + 1, d) for k, d in enumerate(est.norms)]
        self.write_table("rate.csv", ["alpha", "kappa_hat", "c_hat", "residual", "n_first",
                                      "n_last", "status"], rows)
        self.write_table("rate_diagnostics.csv", ["alpha", "n", "d_n"], diag)
        return {"max_abs_kappa_error": max(abs(r[1] - abs(r[0])) for r in rows),
                "max_residual": max(r[3] for r in rows)}

    def _profile(self):
        prof = continuity_profile(self.family(), self.weight)
        cols = ["eps", "cont_norm_01", "cont_norm_beta1", "cont_norm_11", "tv_gap", "beta_gap", "pi_V"]
        self.write_table("continuity.csv", cols, [[p.row()[k] for k in cols] for p in prof])
        return prof

    def continuity_profile(self) -> dict:
        prof = self._profile()
        nz = [p for p in prof if p.eps != 0]
        tv = [p.tv_gap for p in nz]
        return {
            "tv_gap_monotone": all(a < b for a, b in zip(tv, tv[1:])),
            "tv_gap_smallest_eps": nz[0].tv_gap,
            "cont_norm_01_ratio": nz[-1].cont_norm_01 / nz[0].cont_norm_01,
        }

    def holder_check(self) -> dict:
        c = self.cfg
        fam = self.family()
        w1 = WeightSpec(c.r, 1.0)
        l_cap = c.l_cap if c.l_cap is not None else drift_l_cap(self.noise, c.r)
        _, common = certify_family(fam, w1, c.drift_N, l_cap)
        if not common.certified:
            self.warn(f"family drift not certified ({common.status})")
        kappa = estimate_rate(fam[0.0], w1, c.rate_burn_in, c.rate_max_n).kappa_hat
        rho = (1 + kappa) / 2
        prof = self._profile()
        chk = check_holder_bound(prof, common.delta, rho)
        if chk.status != "ok":
            self.warn(f"holder check: {chk.status}")
        out = chk.summary()
        out.update({"kappa_hat": kappa, "common_L": common.L})
        return out

    def lipschitz_check(self) -> dict:
        fam = self.family()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            prof = continuity_profile(fam, self.weight)
            C_hat = check_lipschitz_bound(prof, self.weight)
        for wmsg in caught:
            self.warn(str(wmsg.message))
        rows = [(p.eps, p.beta_gap, p.cont_norm_beta1,
                 p.beta_gap / p.cont_norm_beta1 if p.cont_norm_beta1 > 0 else math.nan)
                for p in prof if p.eps != 0]
        self.write_table("lipschitz.csv", ["eps", "beta_gap", "cont_norm_beta1", "ratio"], rows)
        out = {"C_hat": C_hat}
        if self.cfg.resolvent_bound:
            kappa = estimate_rate(fam[0.0], self.weight.with_beta(1.0)).kappa_hat
            P0 = fam.pop(0.0)
            out["resolvent_bound"] = lipschitz_constant_bound(P0, fam, self.weight, kappa)
        return out

    def counterexample(self) -> dict:
        c = self.cfg
        alphas = self.alphas()
        res = run_counterexample(self.noise, c.alpha0, alphas, grid=self.grid, tau_trunc=c.tau_trunc)
        if res.status != "ok":
            self.warn(f"counterexample: {res.status}")
        weak = dict(res.weak_norms)
        rows = [(a, a - c.alpha0, res.a / (a - c.alpha0), ratio, weak.get(a, math.nan))
                for a, ratio in res.ratios]
        self.write_table("counterexample.csv",
                         ["alpha", "eps", "x_alpha", "ratio", "cont_norm_01"], rows,
                         [f"a={res.a!r} I_a={res.I_a!r} limit={res.limit!r}"])
        return {"a": res.a, "I_a": res.I_a, "limit": res.limit, "limit_check": res.limit_check,
                "relative_error": res.limit_check / abs(res.limit) if res.limit else math.nan,
                "status": res.status}

    def taylor_expansion(self) -> dict:
        c = self.cfg
        fr = self.noise.floor_r
        beta_r = c.beta_r if c.beta_r is not None else 0.5 * (1 - fr / c.r)
        ex = taylor_expansion(self.noise, c.alpha0, c.order, beta_r, self.grid, c.tau_trunc)
        tv = WeightSpec(1.0, 0.0)
        steps = [float(x) for x in (c.h if c.h is not None else [1e-2, 5e-3, 2.5e-3])]
        fd_rows = []
        for h in steps:
            pp = invariant_measure(self.kernel(c.alpha0 + h))
            pm = invariant_measure(self.kernel(c.alpha0 - h))
            fd_rows.append((h, dual_distance((pp - pm) * (0.5 / h), ex.mus[0], tv)))
        self.write_table("taylor_fd.csv", ["h", "tv_error_mu1"], fd_rows)
        rem_rows = []
        for e in self.eps():
            pe = invariant_measure(self.kernel(c.alpha0 + e))
            for k in range(0, ex.order + 1):
                defect, scaled = ex.remainder(pe, e, k)
                rem_rows.append((e, k, defect, scaled))
        self.write_table("taylor_remainder.csv", ["eps", "order", "defect_sup", "R_eps_sup"], rem_rows)
        x = self.grid.nodes
        dens = [(x[i], ex.pi.density[i], *[m.density[i] for m in ex.mus]) for i in range(x.size)]
        self.write_table("taylor_coefficients.csv",
                         ["x", "pi", *[f"mu_{j}" for j in range(1, ex.order + 1)]], dens)
        h, err = np.array(fd_rows).T
        fd_order = float(np.polyfit(np.log(h), np.log(err), 1)[0]) if h.size > 1 else math.nan
        return {"beta_r": beta_r, "fd_order": fd_order, **ex.diagnostics}

    def kartashov_compare(self) -> dict:
        c = self.cfg
        fam = self.family()
        P0 = fam[0.0]
        pi0 = invariant_measure(P0)
        tv = WeightSpec(1.0, 0.0)
        rows, worst = [], 0.0
        for e in sorted(self.eps(), key=abs):
            kx = kartashov_expansion(P0, fam[e], c.kartashov_order, WeightSpec(c.r, 1.0), pi0)
            if kx.status != "ok":
                self.warn(f"eps = {e}: {kx.status}")
            err = dual_distance(kx.partial_sum, invariant_measure(fam[e]), tv)
            m = max((abs(t) for t in kx.term_masses), default=0.0)
            worst = max(worst, m)
            rows.append((e, kx.contraction, kx.tail_bound, err, m, kx.status))
        self.write_table("kartashov.csv",
                         ["eps", "contraction", "tail_bound", "tv_error", "max_term_mass", "status"], rows)
        return {"max_term_mass": worst,
                "within_tail_bound": all(r[3] <= r[2] for r in rows if r[1] <= 0.5)}

    def mc_oracle(self) -> dict:
        c = self.cfg
        spec = ARKernelSpec(c.alpha0, self.noise, self.grid)
        pi = invariant_measure(self.kernel(c.alpha0))
        res = mc_oracle(spec, c.n_samples, c.burn_in, c.seed, pi=pi, n_chains=c.n_chains)
        if res.lost_mass > 0:
            self.warn(f"{res.lost_mass:.3g} of the samples fell outside the grid")
        x = self.grid.nodes
        rows = [(x[i], res.histogram.density[i], pi.density[i]) for i in range(x.size)]
        self.write_table("mc_oracle.csv", ["x", "empirical_density", "quadrature_density"], rows,
                         [f"rng={res.rng} seed={res.seed}"])
        return {"sample_count": res.sample_count, "tv": res.tv, "half_width": res.half_width,
                "lost_mass": res.lost_mass, "rng": res.rng, "seed": res.seed}

    def run(self) -> dict:
        method = getattr(self, self.cfg.experiment.replace("-", "_"))
        summary = method()
        return {
            "experiment": self.cfg.experiment,
            "version": __version__,
            "config": dataclasses.asdict(self.cfg),
            "results": summary,
            "warnings": self.warnings,
            "files": self.files,
        }


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, WeightSpec):
        return {"r": obj.r, "beta": obj.beta}
    return obj


def run(cfg: ExperimentConfig, out_dir: Path) -> dict:
    """Run one experiment and write its CSV files plus summary.json."""
    out_dir.mkdir(parents=True, exist_ok=True)
    runner = Runner(cfg, out_dir)
    summary = _jsonable(runner.run())
    with open(out_dir / f"{cfg.experiment}_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return summary


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ergoperturb", description=__doc__.splitlines()[0])
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="flat JSON configuration file")
    p.add_argument("--out", help="output directory (overrides config and environment)")
    p.add_argument("--validate-only", action="store_true", help="check the configuration and exit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        raw = load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    cfg, errs = validate(raw, args.experiment)
    if errs:
        for e in errs:
            print(f"config error: {e}", file=sys.stderr)
        return 1
    if args.validate_only:
        print("configuration ok")
        return 0
    out = Path(args.out or os.environ.get(ENV_OUT) or cfg.out_dir)
    try:
        summary = run(cfg, out)
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 2
    print(json.dumps(summary["results"], sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end.

    spectral-flow <experiment> --config <path> [--out <dir>] [--seed <u64>] [--plots]
    spectral-flow validate --config <path>

Config files are INI text::

    [experiment]
    seed = 1
    output_dir = out

    [kernel]
    kind = general
    f = sqrt(1 + x^2) * sqrt(1 + y^2)
    box = -1, 1

    [params]
    N = 200
    dt = 1e-3
    t_end = 1

Exit status: 0 success, 2 invalid config, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import math
import operator
import os
import platform
import re
import sys

import numpy as np

from . import __version__
from . import experiments as E
from .core import (InteractionKernel, OrderedSpectrum, UniformGrid, write_grid_cdf,
                   write_spectrum)
from .errors import ConfigError, SpectralFlowError
from .laws import (AnalyticLaw, calibrate_marchenko_pastur, calibrate_semicircle,
                   calibration_report, law_cdf)
from .matrices import (WishartConfig, eigenvalues, simulate_sigma_diffusion,
                       simulate_symmetric_bm, simulate_wishart_path)
from .operators import PvQuadratureParams
from .particles import SdeConfig, coupled_dominance_run, dyson_noise, replica_seed, simulate
from .pde import SchemeParams, solve, step_initial_cdf

EXPERIMENTS = ("simulate-sde", "simulate-matrix", "solve-pde", "converge-N", "dominance",
               "contraction", "dirac-selection", "calibrate")

# ---------------------------------------------------------------------------
# expressions
# ---------------------------------------------------------------------------

_FUNCS = {"tanh": np.tanh, "sqrt": np.sqrt, "abs": np.abs, "exp": np.exp, "log": np.log,
          "sin": np.sin, "cos": np.cos}
_CONSTS = {"pi": math.pi, "e": math.e}
_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)|([A-Za-z_]\w*)|(\*\*|[-+*/^()]))")


def _tokenize(text):
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ConfigError(f"bad character in expression {text!r} at position {pos}")
        num, name, op = m.groups()
        out.append(("num", float(num)) if num else ("name", name) if name
                   else ("op", "^" if op == "**" else op))
        pos = m.end()
    return out


class _Parser:
    """expr := term (('+'|'-') term)*;  term := unary (('*'|'/') unary)*;
    unary := ('-'|'+') unary | power;  power := atom ('^' unary)?;
    atom := number | name | func '(' expr ')' | '(' expr ')'."""

    def __init__(self, text, variables):
        self.text, self.toks, self.i, self.vars = text, _tokenize(text), 0, variables

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, kind=None, val=None):
        tok = self.peek()
        if tok[0] is None or (kind and tok[0] != kind) or (val and tok[1] != val):
            want = val or kind or "token"
            raise ConfigError(f"expected {want} in expression {self.text!r}")
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.i != len(self.toks):
            raise ConfigError(f"trailing input in expression {self.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            node = (op, node, self.unary())
        return node

    def unary(self):
        if self.peek() in (("op", "-"), ("op", "+")):
            op = self.take()[1]
            u = self.unary()
            return ("neg", u) if op == "-" else u
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return ("num", val)
        if kind == "name":
            self.take()
            if val in _FUNCS:
                self.take("op", "(")
                arg = self.expr()
                self.take("op", ")")
                return ("call", val, arg)
            if val in self.vars:
                return ("var", val)
            if val in _CONSTS:
                return ("num", _CONSTS[val])
            raise ConfigError(f"unknown name {val!r} in expression {self.text!r}")
        if (kind, val) == ("op", "("):
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        raise ConfigError(f"unexpected token {val!r} in expression {self.text!r}")


_OPS = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide, "^": np.power}


def _eval(node, env):
    tag = node[0]
    if tag == "num":
        return node[1]
    if tag == "var":
        return env[node[1]]
    if tag == "neg":
        return -_eval(node[1], env)
    if tag == "call":
        return _FUNCS[node[1]](_eval(node[2], env))
    return _OPS[tag](_eval(node[1], env), _eval(node[2], env))


def parse_expression(text, variables=("x", "y", "z")):
    """Compile an arithmetic formula into a numpy function of the given variables.

    Grammar: numbers, the variables, pi, e, + - * / ^ (or **, right associative and
    binding tighter than unary minus on its left), and tanh, sqrt, abs, exp, log, sin, cos.
    """
    tree = _Parser(text, tuple(variables)).parse()

    def fn(*args):
        env = {v: np.asarray(a, float) for v, a in zip(variables, args)}
        shape = np.broadcast(*env.values()).shape if env else ()
        return np.asarray(_eval(tree, env), float) * np.ones(shape)

    fn.expression = text.strip()
    return fn


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

class ExperimentConfig:
    """Parsed config: sections of raw strings plus typed accessors."""

    def __init__(self, text, experiment=None, source="<string>"):
        self.text = text
        self.source = source
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(text, source=source)
        except configparser.Error as e:
            raise ConfigError(f"unreadable config: {e}") from None
        self.sections = {s: dict(cp[s]) for s in cp.sections()}
        exp = self.sections.get("experiment", {})
        name = exp.get("name")
        if experiment and name and name != experiment:
            raise ConfigError(f"config is for {name!r}, not {experiment!r}")
        self.experiment = experiment or name
        self.diagnostics = []
        self.seed_override = None

    @classmethod
    def from_file(cls, path, experiment=None):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        return cls(text, experiment, source=str(path))

    @property
    def hash(self):
        extra = "" if self.seed_override is None else f"\nseed_override={self.seed_override}"
        return hashlib.sha256((self.text + extra).encode()).hexdigest()[:16]

    def _get(self, section, key, default, conv):
        raw = self.sections.get(section, {}).get(key)
        if raw is None:
            return default
        try:
            return conv(raw)
        except (ValueError, KeyError, ConfigError) as e:
            self.diagnostics.append(f"[{section}] {key} = {raw!r}: {e}")
            return default

    def num(self, key, default=None, section="params"):
        return self._get(section, key, default, float)

    def int(self, key, default=None, section="params"):
        return self._get(section, key, default, lambda s: int(float(s)))

    def str(self, key, default=None, section="params"):
        return self._get(section, key, default, str.strip)

    def list(self, key, default=None, section="params"):
        return self._get(section, key, default,
                         lambda s: [float(v) for v in s.replace(",", " ").split()])

    def bool(self, key, default=False, section="params"):
        return self._get(section, key, default,
                         lambda s: {"true": True, "1": True, "yes": True,
                                    "false": False, "0": False, "no": False}[s.strip().lower()])

    @property
    def seed(self):
        return self.int("seed", 0, section="experiment")

    def kernel(self):
        kind = self.str("kind", "dyson", section="kernel")
        if kind == "dyson":
            return InteractionKernel.dyson()
        if kind == "wishart":
            n, m = self.int("n", None), self.int("m", None)
            c = self.num("c", None, section="kernel")
            if c is None:
                c = (m / n) if (n and m) else 2.0
            if c < 1:
                raise ConfigError(f"Wishart needs m >= n (c = m/n >= 1), got c = {c:g}")
            return InteractionKernel.wishart(c)
        if kind == "general":
            fx = self.str("f", None, section="kernel")
            gx = self.str("g", None, section="kernel")
            f = parse_expression(fx, ("x", "y")) if fx else None
            g = parse_expression(gx, ("x", "z")) if gx else None
            box = self.list("box", [-1.0, 1.0], section="kernel")
            if self.bool("particle_only", False, section="kernel"):
                if f is None:
                    raise ConfigError("particle_only kernels need f")
                return InteractionKernel.pair_interaction(f, label=fx)
            return InteractionKernel.general(f=f, g=g, box=tuple(box[:2]),
                                             label=fx or gx or "general")
        raise ConfigError(f"unknown kernel kind {kind!r}")


def validate(cfg: ExperimentConfig) -> list:
    """All violated preconditions, without running anything."""
    diags = []
    if cfg.experiment is not None and cfg.experiment not in EXPERIMENTS:
        diags.append(f"experiment must be one of {', '.join(EXPERIMENTS)}; got {cfg.experiment!r}")
    for key in ("dt", "t_end", "h"):
        v = cfg.num(key, None)
        if v is not None and not v > 0:
            diags.append(f"{key} must be positive, got {v:g}")
    for key in ("N", "n", "m", "replicas", "pairs", "seeds"):
        v = cfg.int(key, None)
        if v is not None and v < 1:
            diags.append(f"{key} must be a positive integer, got {v}")
    n, m = cfg.int("n", None), cfg.int("m", None)
    if n is not None and m is not None and m < n:
        diags.append(f"Wishart paths need m >= n, got n={n}, m={m}")
    try:
        k = cfg.kernel()
        if cfg.experiment in ("simulate-sde", "dominance", "converge-N") and k.f is None:
            diags.append("particle experiments need the pair interaction f")
    except ConfigError as e:
        diags.append(str(e))
    except SpectralFlowError as e:
        diags.append(f"kernel: {e}")
    for key in ("record_times",):
        r = cfg.list(key, None)
        t_end = cfg.num("t_end", None)
        if r and t_end and (min(r) < 0 or max(r) > t_end):
            diags.append("record_times must lie in [0, t_end]")
    diags += [d for d in cfg.diagnostics if d not in diags]
    return diags


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _noise(cfg, N, kernel):
    ns = cfg.num("noise_scale", None)
    beta = cfg.num("beta", None)
    if ns is None and beta is not None and kernel.kind == "dyson":
        ns = dyson_noise(N, beta)
    return ns


def _sde_config(cfg, t_end=None, N=None):
    k = cfg.kernel()
    N = N or cfg.int("N", 100)
    return SdeConfig(k, N, cfg.num("dt", 1e-3), t_end or cfg.num("t_end", 1.0),
                     noise_scale=_noise(cfg, N, k), seed=cfg.seed,
                     epsilon_N=cfg.num("epsilon_N", None), eta=cfg.num("eta", 1e-6))


def _grid_for(spectra, h):
    lo = min(float(s.positions[0]) for s in spectra)
    hi = max(float(s.positions[-1]) for s in spectra)
    lo = np.floor(lo / h) * h - 2 * h
    hi = np.ceil(hi / h) * h + 2 * h
    return UniformGrid(lo, hi, h)


def run_simulate_sde(cfg, out):
    sc = _sde_config(cfg)
    rec = cfg.list("record_times", [sc.t_end])
    finals = []
    for r in range(cfg.int("replicas", 1)):
        tr = simulate(sc.with_seed(replica_seed(sc.seed, r)), rec)
        tr.write_csv(os.path.join(out, f"trajectory_r{r}.csv"))
        finals.append(tr.final)
    grid = _grid_for(finals, cfg.num("h", 0.01))
    F = E.average_cdf(finals, grid)
    write_grid_cdf(os.path.join(out, "cdf.csv"), F)
    return {"cdf": F}


def run_simulate_matrix(cfg, out):
    kind = cfg.str("kind", "dyson", section="kernel")
    n, dt, t_end = cfg.int("n", 100), cfg.num("dt", 0.01), cfg.num("t_end", 1.0)
    sigma = cfg.str("sigma", None)
    spectra = []
    for r in range(cfg.int("replicas", 1)):
        seed = replica_seed(cfg.seed, r)
        if kind == "wishart":
            path = simulate_wishart_path(WishartConfig(n, cfg.int("m", 2 * n), dt, seed), t_end,
                                         record_times=[t_end])
        elif sigma:
            path = simulate_sigma_diffusion(n, parse_expression(sigma, ("x",)), dt, t_end, seed,
                                            scale=cfg.num("scale", 1.0), record_times=[t_end])
        else:
            path = simulate_symmetric_bm(n, dt, t_end, seed, scale=cfg.num("scale", 1.0),
                                         record_times=[t_end])
        s = eigenvalues(path.final)
        write_spectrum(os.path.join(out, f"spectrum_r{r}.csv"), s)
        spectra.append(s)
    grid = _grid_for(spectra, cfg.num("h", 0.01))
    F = E.average_cdf(spectra, grid)
    write_grid_cdf(os.path.join(out, "cdf.csv"), F)
    return {"cdf": F}


def _scheme(cfg, kernel=None):
    k = kernel or cfg.kernel()
    tc = cfg.num("tail_cut", math.inf)
    return SchemeParams(h=cfg.num("h", 0.01), dt=cfg.num("dt", 0.05), kernel=k,
                        eps_smooth=cfg.num("eps_smooth", 1e-3),
                        eps_kernel=cfg.num("eps_kernel", None),
                        quad=PvQuadratureParams(tail_cut=tc))


def run_solve_pde(cfg, out):
    p = _scheme(cfg)
    t_end = cfg.num("t_end", 1.0)
    init = cfg.str("initial", "step")
    lo = cfg.num("grid_lo", 0.0 if p.kernel.kind == "wishart" else -3.0)
    hi = cfg.num("grid_hi", 8.0 if p.kernel.kind == "wishart" else 3.0)
    hi = lo + np.ceil((hi - lo) / p.h - 1e-9) * p.h
    grid = UniformGrid(lo, hi, p.h)
    t0 = 0.0
    if init == "step":
        F0 = step_initial_cdf(grid, cfg.num("x0", 0.0 if p.kernel.kind != "wishart" else p.h))
    elif init == "semicircle":
        t0 = cfg.num("t0", 1.0)
        F0 = law_cdf(AnalyticLaw.semicircle(t0, cfg.num("radius_coeff", 2.0)), grid)
    else:
        raise ConfigError(f"unknown initial profile {init!r}")
    rec = cfg.list("record_times", [t_end])
    snaps, rep = solve(F0, t_end, p, record_times=rec, t0=t0)
    for t, s in zip(sorted(rec), snaps):
        write_grid_cdf(os.path.join(out, f"cdf_t{t:g}.csv"), s)
    write_grid_cdf(os.path.join(out, "cdf.csv"), rep.final)
    rep.write_csv(os.path.join(out, "trace.csv"))
    return {"cdf": rep.final, "trace": rep}


def run_converge_N(cfg, out):
    Ns = [int(v) for v in cfg.list("Ns", [50, 100, 200, 400])]
    rows, Fp = E.convergence_study(Ns, seeds=cfg.int("seeds", 10), t=cfg.num("t_end", 1.0),
                                   h=cfg.num("h", 1 / 400), beta=cfg.num("beta", E.LAW_BETA),
                                   seed=cfg.seed, dt=cfg.num("dt", 1e-3))
    with open(os.path.join(out, "convergence.csv"), "w") as fh:
        fh.write("N,ks_mean,ks_std\n")
        for r in rows:
            fh.write(f"{r['N']},{r['ks_mean']!r},{r['ks_std']!r}\n")
    means = [r["ks_mean"] for r in rows]
    mono = all(b < a for a, b in zip(means, means[1:]))
    with open(os.path.join(out, "convergence.txt"), "w") as fh:
        fh.write(f"monotone_decreasing={mono}\nfinal_ks={means[-1]!r}\n")
    write_grid_cdf(os.path.join(out, "cdf_pde.csv"), Fp)
    return {"rows": rows, "monotone": mono}


def run_dominance(cfg, out):
    N = cfg.int("N", 50)
    dt, t_end = cfg.num("dt", 1e-4), cfg.num("t_end", 1.0)
    K = cfg.num("K", 10.0)
    pairs = cfg.int("pairs", 1)
    initial = cfg.str("initial", "random")
    beta = cfg.num("beta", E.COUPLED_BETA)
    rng = np.random.default_rng(cfg.seed)
    total, worst = 0, -math.inf
    with open(os.path.join(out, "excursions.csv"), "w") as fh:
        fh.write("pair,worst_excursion,violations\n")
        for k in range(pairs):
            s1, s2 = E.random_dominated_pair(rng, N)
            if initial == "equal":
                s2 = s1
            sc = SdeConfig(InteractionKernel.dyson(), N, dt, t_end,
                           noise_scale=cfg.num("noise_scale", dyson_noise(N, beta)),
                           seed=replica_seed(cfg.seed, k), kappa_gap=None, blast_gap="nearest")
            rec = list(np.linspace(t_end / 20, t_end, 20))
            _, _, rep = coupled_dominance_run(sc, s1, s2, rec, K=K)
            total += rep.count
            worst = max(worst, rep.worst_excursion)
            fh.write(f"{k},{rep.worst_excursion!r},{rep.count}\n")
            if k == 0:
                rep.write(os.path.join(out, "violations_pair0.txt"))
    with open(os.path.join(out, "dominance.txt"), "w") as fh:
        fh.write(f"pairs={pairs}\ntol={K * dt!r}\nviolations={total}\nworst_excursion={worst!r}\n")
    return {"violations": total, "worst_excursion": worst}


def run_contraction(cfg, out):
    wp = E.contraction_particles(pairs=cfg.int("pairs", 100), N=cfg.int("N", 40),
                                 dt=cfg.num("dt", 1e-3), t_end=cfg.num("t_end", 0.5),
                                 seed=cfg.seed)
    wq = E.contraction_pde(pairs=cfg.int("pde_pairs", 20), h=cfg.num("h", 0.02),
                           dt=cfg.num("pde_dt", 0.01), t_end=cfg.num("pde_t_end", 0.25),
                           seed=cfg.seed)
    with open(os.path.join(out, "contraction.csv"), "w") as fh:
        fh.write("level,p,max_increase\n")
        for p, v in wp.items():
            fh.write(f"particles,{p},{v!r}\n")
        for p, v in wq.items():
            fh.write(f"pde,{p},{v!r}\n")
    return {"particles": wp, "pde": wq}


def run_dirac_selection(cfg, out):
    r = E.dirac_selection(h=cfg.num("h", 1 / 200), t=cfg.num("t_end", 1.0),
                          dt=cfg.num("dt", 0.05))
    write_grid_cdf(os.path.join(out, "cdf.csv"), r["final"])
    with open(os.path.join(out, "selection.txt"), "w") as fh:
        for k in ("sup_to_semicircle", "sup_to_frozen", "steps", "repairs"):
            fh.write(f"{k}={r[k]!r}\n")
    return r


def run_calibrate(cfg, out):
    family = cfg.str("family", "semicircle")
    t = cfg.num("t_end", 1.0)
    reps = cfg.int("replicas", 10)
    if family == "semicircle":
        n = cfg.int("n", 200)
        spectra = [eigenvalues(simulate_symmetric_bm(n, t, t, replica_seed(cfg.seed, r),
                                                     record_times=[t]).final)
                   for r in range(reps)]
        law = calibrate_semicircle(spectra, t)
    elif family == "marchenko-pastur":
        n, m = cfg.int("n", 100), cfg.int("m", 200)
        spectra = [eigenvalues(simulate_wishart_path(
            WishartConfig(n, m, t, replica_seed(cfg.seed, r)), t, record_times=[t]).final)
            for r in range(reps)]
        law = calibrate_marchenko_pastur(spectra, m / n, sigma=math.sqrt(t))
    else:
        raise ConfigError(f"unknown law family {family!r}")
    rep = calibration_report(law)
    with open(os.path.join(out, "calibration.txt"), "w") as fh:
        for k, v in rep.items():
            fh.write(f"{k}={v!r}\n" if not isinstance(v, str) else f"{k}={v}\n")
    lo, hi = law.support()
    h = cfg.num("h", 0.01)
    grid = UniformGrid(np.floor(lo / h) * h - h, np.ceil(hi / h) * h + h, h)
    write_grid_cdf(os.path.join(out, "law_cdf.csv"), law_cdf(law, grid))
    return {"law": law, "report": rep}


RUNNERS = {
    "simulate-sde": run_simulate_sde,
    "simulate-matrix": run_simulate_matrix,
    "solve-pde": run_solve_pde,
    "converge-N": run_converge_N,
    "dominance": run_dominance,
    "contraction": run_contraction,
    "dirac-selection": run_dirac_selection,
    "calibrate": run_calibrate,
}


def write_meta(cfg: ExperimentConfig, out):
    with open(os.path.join(out, "run.meta"), "w") as fh:
        fh.write(f"tool=spectral-flow\nversion={__version__}\nexperiment={cfg.experiment}\n")
        fh.write(f"seed={cfg.seed}\nconfig_hash={cfg.hash}\nconfig_source={cfg.source}\n")
        if cfg.seed_override is not None:
            fh.write(f"seed_override={cfg.seed_override}\n")
        fh.write(f"python={platform.python_version()}\nnumpy={np.__version__}\n")
        fh.write("# config follows\n")
        for line in cfg.text.splitlines():
            fh.write(f"config: {line}\n")


def run(cfg: ExperimentConfig, out=None, plots=False):
    """Validate, run and write artifacts.  Returns the runner's result dict."""
    diags = validate(cfg)
    if diags:
        raise ConfigError("; ".join(diags))
    out = out or cfg.str("output_dir", "out", section="experiment")
    os.makedirs(out, exist_ok=True)
    write_meta(cfg, out)
    res = RUNNERS[cfg.experiment](cfg, out)
    if plots:
        from .plots import plot_outputs
        plot_outputs(cfg.experiment, res, out)
    return res


def _error_line(kind, e):
    msg = str(e).replace("\n", " ")
    return f"error: kind={kind} type={type(e).__name__} message={msg}"


def main(argv=None):
    ap = argparse.ArgumentParser(prog="spectral-flow", description=__doc__.split("\n")[0])
    ap.add_argument("experiment", choices=EXPERIMENTS + ("validate",))
    ap.add_argument("--config", required=True)
    ap.add_argument("--out")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--plots", action="store_true")
    args = ap.parse_args(argv)
    try:
        if args.experiment == "validate":
            cfg = ExperimentConfig.from_file(args.config)
            diags = validate(cfg)
            for d in diags:
                print(f"diagnostic: {d}")
            if not diags:
                print("ok")
            return 2 if diags else 0
        cfg = ExperimentConfig.from_file(args.config, args.experiment)
        if args.seed is not None:
            cfg.sections.setdefault("experiment", {})["seed"] = str(args.seed)
            cfg.seed_override = args.seed
        run(cfg, args.out, args.plots)
    except ConfigError as e:
        print(_error_line("config", e), file=sys.stderr)
        return 2
    except SpectralFlowError as e:
        print(_error_line("numerical", e), file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

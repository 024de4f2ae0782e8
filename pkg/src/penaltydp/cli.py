"""Command-line entry point: ``run``, ``accountant``, ``share`` and ``diag``.

Exit codes: 0 success, 2 configuration error, 3 runtime error, 4 protocol error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import diagnostics, models, privacy
from .models import ValidationError
from .outputs import dumps17, read_samples_csv, write_samples_csv, write_transcript_jsonl
from .samplers import MODES, PenaltyConfig, ProposalKernel, run_chain
from .sharing import ProtocolConfig, ProtocolError, Shard, run_protocol

log = logging.getLogger("penaltydp")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_PROTOCOL = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def _num(cfg, key, path, kind=float, minimum=None, strict=False, default=None, required=False):
    if key not in cfg:
        if required:
            raise ConfigError(f"{path}{key}: required")
        return default
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and not float(v).is_integer()):
        raise ConfigError(f"{path}{key}: expected {'an integer' if kind is int else 'a number'}")
    v = kind(v)
    if minimum is not None and (v <= minimum if strict else v < minimum):
        raise ConfigError(f"{path}{key}: must be {'>' if strict else '>='} {minimum}")
    return v


def _env_seed(default):
    """``PENALTYDP_SEED`` when set, else ``default``."""
    raw = os.environ.get("PENALTYDP_SEED")
    if raw in (None, ""):
        return default
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigError("PENALTYDP_SEED: expected an integer") from None
    if seed < 0:
        raise ConfigError("PENALTYDP_SEED: must be >= 0")
    return seed


@dataclass
class ExperimentConfig:
    model_spec: dict
    data_path: Path
    mode: str
    c_prop: float
    alpha: float
    seed: int
    output_dir: Optional[Path]
    sigma: Optional[float] = None
    iterations: Optional[int] = None
    burn_in: Optional[int] = None
    thin: int = 1
    xi: Optional[float] = None
    plan: Optional[dict] = None
    on_out_of_bounds: str = "reject"

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path = Path(".")):
        if not isinstance(raw, dict):
            raise ConfigError("config: expected a JSON object")
        known = {"model", "data", "mode", "proposal", "sigma", "iterations", "burn_in", "thin", "xi",
                 "plan", "seed", "output_dir", "on_out_of_bounds"}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"config: unknown keys {sorted(extra)}")
        model = raw.get("model")
        if not isinstance(model, dict) or "name" not in model:
            raise ConfigError("model: expected an object with a 'name'")
        if not isinstance(raw.get("data"), str):
            raise ConfigError("data: required path to a CSV file")
        mode = raw.get("mode", "penalty")
        if mode not in MODES:
            raise ConfigError(f"mode: must be one of {list(MODES)}")
        prop = raw.get("proposal", {})
        if not isinstance(prop, dict):
            raise ConfigError("proposal: expected an object")
        c_prop = _num(prop, "c_prop", "proposal.", minimum=0, strict=True, default=1.0)
        alpha = _num(prop, "alpha", "proposal.", minimum=0, strict=True, default=0.5)
        seed = _num(raw, "seed", "", kind=int, minimum=0, default=0)
        seed = _env_seed(seed)
        out = raw.get("output_dir")
        policy = raw.get("on_out_of_bounds", "reject")
        if policy not in ("reject", "clip"):
            raise ConfigError("on_out_of_bounds: must be 'reject' or 'clip'")
        cfg = cls(dict(model), (base_dir / raw["data"]), mode, c_prop, alpha, seed,
                  None if out is None else base_dir / out, on_out_of_bounds=policy)

        explicit = [k for k in ("sigma", "iterations", "xi") if k in raw]
        plan = raw.get("plan")
        if plan is not None and explicit:
            raise ConfigError(f"plan: cannot be combined with explicit {explicit}")
        cfg.thin = _num(raw, "thin", "", kind=int, minimum=1, default=1)
        cfg.burn_in = _num(raw, "burn_in", "", kind=int, minimum=0)
        if plan is not None:
            if not isinstance(plan, dict):
                raise ConfigError("plan: expected an object")
            if mode == "mh":
                raise ConfigError("plan: the exact MH chain has no privacy plan")
            cfg.plan = {
                "beta": _num(plan, "beta", "plan.", minimum=0, strict=True, required=True),
                "k0": _num(plan, "k0", "plan.", minimum=0, strict=True, required=True),
            }
            extra = set(plan) - {"beta", "k0"}
            if extra:
                raise ConfigError(f"plan: unknown keys {sorted(extra)}")
        else:
            cfg.iterations = _num(raw, "iterations", "", kind=int, minimum=1, required=True)
            if mode == "penalty":
                cfg.sigma = _num(raw, "sigma", "", minimum=0, strict=True, required=True)
            elif mode == "expfam":
                cfg.xi = _num(raw, "xi", "", minimum=0, strict=True, required=True)
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(raw, path.parent)

    def materialize(self):
        return {
            "model": self.model_spec, "data": str(self.data_path), "mode": self.mode,
            "proposal": {"c_prop": self.c_prop, "alpha": self.alpha},
            "sigma": self.sigma, "iterations": self.iterations, "burn_in": self.burn_in,
            "thin": self.thin, "xi": self.xi, "plan": self.plan, "seed": self.seed,
            "on_out_of_bounds": self.on_out_of_bounds,
        }


def _build(cfg: ExperimentConfig):
    try:
        model = models.build_model(cfg.model_spec)
    except TypeError as exc:
        raise ConfigError(f"model: {exc}") from None
    except ValidationError as exc:
        raise ConfigError(f"model: {exc}") from None
    try:
        data = models.load_csv(cfg.data_path, model.data_space, cfg.on_out_of_bounds)
    except OSError as exc:
        raise ConfigError(f"data: {cfg.data_path}: {exc.strerror}") from None
    except ValidationError as exc:
        raise ConfigError(f"data: {exc}") from None
    return model, data


def plan_for(model, n, mode, c_prop, alpha, beta, k0):
    """Privacy plan for a chain on ``n`` records; returns ``(plan, xi or None)``.

    Penalty chains use the sensitivity constant ``2 d M c_prop``; the
    sufficient-statistic chain bounds the natural-parameter step by
    ``phi_lipschitz * c_prop``.
    """
    if mode == "expfam":
        if model.expfam is None:
            raise ConfigError("mode: expfam needs an exponential-family model")
        c = model.expfam.phi_lipschitz * c_prop
        plan = privacy.make_plan(n, alpha, c, beta, k0)
        return plan, privacy.make_expfam_plan(plan, model.expfam.suff_stat_l2_sensitivity).xi_n
    c = 2.0 * model.dim * model.lipschitz_M * c_prop
    return privacy.make_plan(n, alpha, c, beta, k0), None


def _write_atomic(out_dir: Path, files: dict):
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()):
        raise ConfigError(f"output_dir: {out_dir} exists and is not empty")
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".penaltydp-", dir=out_dir.parent))
    try:
        for name, writer in files.items():
            with open(tmp / name, "w", newline="") as fh:
                writer(fh)
        if out_dir.exists():
            out_dir.rmdir()
        os.rename(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def _diagnostics(samples, model, data, acceptance_rate):
    x = np.asarray(samples, dtype=float)
    rep = {
        "acceptance_rate": acceptance_rate,
        "retained": int(x.shape[0]),
        "ess": [diagnostics.ess(x[:, j]) for j in range(x.shape[1])] if x.shape[0] >= 100 else None,
        "posterior_mean": x.mean(axis=0).tolist(),
        "posterior_var": x.var(axis=0, ddof=1).tolist() if x.shape[0] > 1 else None,
        "ks_statistic": None,
        "analytic": None,
    }
    if model.name in models.BUILTINS:
        post = models.analytic_posterior(model, data)
        rep["ks_statistic"] = diagnostics.ks_against_analytic(x[:, 0], model, data)
        rep["analytic"] = {"mean": post.mean, "var": post.var, "family": post.family, "params": post.params}
    return rep


def run_experiment(cfg: ExperimentConfig, output_dir=None):
    """Run one configured chain and write ``samples.csv``, ``transcript.jsonl``
    and ``report.json`` into the output directory, all or nothing."""
    model, data = _build(cfg)
    out_dir = Path(output_dir) if output_dir is not None else cfg.output_dir
    if out_dir is None:
        raise ConfigError("output_dir: required")
    plan = None
    if cfg.plan is not None:
        plan, xi = plan_for(model, data.n, cfg.mode, cfg.c_prop, cfg.alpha, cfg.plan["beta"], cfg.plan["k0"])
        if plan.k_n < 1:
            raise ConfigError(f"plan: k_n = 0 iterations for n = {data.n}")
        sigma, iterations = plan.sigma, plan.k_n
    else:
        sigma, iterations, xi = cfg.sigma, cfg.iterations, cfg.xi
    burn_in = cfg.burn_in
    if burn_in is not None and burn_in >= iterations:
        raise ConfigError(f"burn_in: must be < iterations ({iterations})")
    pcfg = PenaltyConfig(sigma=sigma or 0.0, iterations=iterations, burn_in=burn_in, thin=cfg.thin, xi=xi)
    kernel = ProposalKernel.from_window(cfg.c_prop, data.n, cfg.alpha)
    res = run_chain(model, data, kernel, pcfg, cfg.mode, seed=cfg.seed)

    report = _diagnostics(res.samples, model, data, res.summary["acceptance_rate"])
    report.update({
        "iterations": iterations,
        "mechanism_calls": res.summary["mechanism_calls"],
        "sigma": pcfg.sigma if cfg.mode == "penalty" else None,
        "xi": xi,
        "proposal_half_width": kernel.half_width,
        "privacy": plan.report() if plan is not None else None,
        "runtime_s": res.summary["runtime_s"],
        "config": {**cfg.materialize(), "burn_in": pcfg.burn_in, "iterations": iterations},
    })
    _write_atomic(out_dir, {
        "samples.csv": lambda fh: write_samples_csv(fh, res.sample_iters, res.samples),
        "transcript.jsonl": lambda fh: write_transcript_jsonl(fh, res.transcript),
        "report.json": lambda fh: fh.write(dumps17(report) + "\n"),
    })
    return report


# ---------------------------------------------------------------------------
# subcommands


def _cmd_run(args):
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    report = run_experiment(cfg, args.out)
    print(dumps17({k: report[k] for k in ("acceptance_rate", "ess", "posterior_mean", "posterior_var",
                                          "ks_statistic", "privacy")}))


def _cmd_accountant(args):
    try:
        plan = privacy.make_plan(args.n, args.alpha, args.c, args.beta, args.k0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rep = plan.report()
    if args.s_sensitivity is not None:
        rep["xi_n"] = privacy.make_expfam_plan(plan, args.s_sensitivity).xi_n
    print(dumps17(rep))


def _load_shards(shard_dir, model, parties, policy):
    files = sorted(Path(shard_dir).glob("*.csv"))
    if len(files) != parties:
        raise ConfigError(f"shards: found {len(files)} CSV files in {shard_dir}, expected {parties}")
    shards, start = [], 0
    for i, f in enumerate(files, start=1):
        try:
            d = models.load_csv(f, model.data_space, policy)
        except ValidationError as exc:
            raise ConfigError(f"shards: {exc}") from None
        shards.append(Shard(i, d, np.arange(start, start + d.n)))
        start += d.n
    return shards


def _cmd_share(args):
    spec = {"name": args.model}
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        spec = cfg.model_spec
    try:
        model = models.build_model(spec)
    except (TypeError, ValidationError) as exc:
        raise ConfigError(f"model: {exc}") from None
    shards = _load_shards(args.shards, model, args.parties, "reject")
    n = sum(s.data.n for s in shards)
    seed = args.seed if args.seed is not None else _env_seed(0)
    try:
        pcfg = ProtocolConfig(args.parties, args.sigma, args.rounds, args.transport, timeout=args.timeout)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    plan = None
    if args.beta is not None and args.k0 is not None:
        plan, _ = plan_for(model, n, "penalty", args.c_prop, args.alpha, args.beta, args.k0)
    kernel = ProposalKernel.from_window(args.c_prop, n, args.alpha)
    res = run_protocol(model, shards, kernel, pcfg, seed=seed, plan=plan)
    all_data = models.Dataset(np.concatenate([s.data.records for s in shards]))
    report = _diagnostics(res.samples, model, all_data, res.summary["acceptance_rate"])
    report.update({k: res.summary[k] for k in ("num_parties", "rounds", "total_penalty_variance",
                                               "proposals_sent", "privacy")})
    if args.out:
        _write_atomic(Path(args.out), {
            "samples.csv": lambda fh: write_samples_csv(fh, res.sample_iters, res.samples),
            "transcript.jsonl": lambda fh: write_transcript_jsonl(fh, res.transcript),
            "report.json": lambda fh: fh.write(dumps17(report) + "\n"),
        })
    print(dumps17(report))


def _cmd_diag(args):
    cfg = ExperimentConfig.load(args.config)
    model, data = _build(cfg)
    try:
        _, samples = read_samples_csv(args.samples)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"samples: {exc}") from None
    print(dumps17(_diagnostics(samples[:: args.thin], model, data, None)))


def build_parser():
    p = argparse.ArgumentParser(prog="penaltydp", description="Differentially private penalty MCMC.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a configured chain")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.add_argument("--seed", type=int)
    r.set_defaults(func=_cmd_run)

    a = sub.add_parser("accountant", help="privacy plan for n records")
    a.add_argument("--n", type=int, required=True)
    a.add_argument("--alpha", type=float, default=0.5)
    a.add_argument("--c", type=float, required=True, help="sensitivity constant")
    a.add_argument("--beta", type=float, default=1.1)
    a.add_argument("--k0", type=float, default=1.0)
    a.add_argument("--s-sensitivity", type=float, help="also report xi_n for this statistic sensitivity")
    a.set_defaults(func=_cmd_accountant)

    s = sub.add_parser("share", help="run the N-party protocol")
    s.add_argument("--parties", type=int, required=True)
    s.add_argument("--shards", required=True, help="directory with one CSV file per party")
    s.add_argument("--sigma", type=float, required=True, help="per-party noise s.d.")
    s.add_argument("--rounds", type=int, required=True)
    s.add_argument("--transport", choices=("socket", "in_process"), default="in_process")
    s.add_argument("--model", default="bernoulli")
    s.add_argument("--config", help="experiment config to take the model spec from")
    s.add_argument("--c-prop", type=float, default=1.0)
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--beta", type=float)
    s.add_argument("--k0", type=float)
    s.add_argument("--timeout", type=float, default=5.0)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_share)

    d = sub.add_parser("diag", help="diagnostics for a samples CSV")
    d.add_argument("--config", required=True)
    d.add_argument("--samples", required=True)
    d.add_argument("--thin", type=int, default=1)
    d.set_defaults(func=_cmd_diag)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except Exception as exc:  # noqa: BLE001 - top-level exit-code mapping
        log.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

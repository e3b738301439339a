"""Command line interface: validate, spp, simulate, regret, sweep, verify."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .analytics import regret_experiment
from .builtins import UnknownBuiltin, builtin_instance
from .engine import MatchingSystem, arrival_matrix, fmt, geometric_checkpoints, run_batch, trajectory_rows, write_trajectory_csv
from .network import InvalidNetwork, MatchingNetwork, NetworkError, load_instance, validate
from .planner import GpgViolation, PlannerError, SppSolution, solve_spp
from .policies import make_policy

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_GPG = 2
EXIT_VERIFY = 3

MODES = ("validate", "spp", "simulate", "regret", "sweep", "verify")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str = "regret"
    instance: Any = None  # builtin name, file path, or inline network object
    policies: list[str] | None = None  # None: every policy that applies to the instance
    T: int = 10_000
    checkpoints: list[int] | None = None  # None: geometric grid
    replications: int = 1000
    seed: int = 0
    lam: list[float] | None = None  # arrival weights, renormalized
    sweep: dict | None = None  # {"parameter": "epsilon_scale", "values": [...]}
    scale: str = "full"  # verify size: "quick" or "full"
    figures: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, raw: dict, source: str = "config") -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError(f"{source}: top level must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in raw:
            if key not in known:
                raise ConfigError(f"{source}: field '{key}': unknown field (known: {', '.join(sorted(known))})")
        cfg = cls(**raw)
        cfg.check(source)
        return cfg

    @classmethod
    def from_json(cls, text: str, source: str = "config") -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        return cls.from_dict(raw, source)

    def check(self, source: str = "config") -> None:
        def bad(name: str, why: str) -> ConfigError:
            return ConfigError(f"{source}: field '{name}': {why}")

        def is_int(x) -> bool:
            return isinstance(x, int) and not isinstance(x, bool)

        if self.mode not in MODES:
            raise bad("mode", f"must be one of {', '.join(MODES)}")
        if self.instance is not None and not isinstance(self.instance, (str, dict)):
            raise bad("instance", "expected a builtin name, a path, or a network object")
        if self.policies is not None and (
            not isinstance(self.policies, list) or not all(isinstance(p, str) for p in self.policies)
        ):
            raise bad("policies", "expected a list of policy names")
        if not is_int(self.T) or self.T < 0:
            raise bad("T", "expected a non-negative integer")
        if self.checkpoints is not None:
            if not isinstance(self.checkpoints, list) or not all(is_int(c) for c in self.checkpoints):
                raise bad("checkpoints", "expected a list of integers")
            if any(c < 0 or c > self.T for c in self.checkpoints):
                raise bad("checkpoints", f"every checkpoint must lie in [0, T={self.T}]")
        if not is_int(self.replications) or self.replications < 1:
            raise bad("replications", "expected a positive integer")
        if not is_int(self.seed) or self.seed < 0:
            raise bad("seed", "expected a non-negative integer")
        if self.lam is not None and (
            not isinstance(self.lam, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in self.lam)
        ):
            raise bad("lam", "expected a list of numbers")
        if self.sweep is not None:
            if not isinstance(self.sweep, dict) or self.sweep.get("parameter") != "epsilon_scale":
                raise bad("sweep", "expected {\"parameter\": \"epsilon_scale\", \"values\": [...]}")
            vals = self.sweep.get("values")
            if not isinstance(vals, list) or not vals or not all(isinstance(v, (int, float)) and 0 < v <= 1 for v in vals):
                raise bad("sweep", "values must be a non-empty list of numbers in (0, 1]")
        if self.scale not in ("quick", "full"):
            raise bad("scale", "must be 'quick' or 'full'")
        if not isinstance(self.figures, bool):
            raise bad("figures", "expected true or false")


DEFAULT_SWEEP = {"parameter": "epsilon_scale", "values": [1.0, 0.5, 0.25, 0.125]}


# -- instance resolution ---------------------------------------------------------------


def resolve_instance(spec: Any, lam: list[float] | None = None) -> MatchingNetwork:
    if spec is None:
        raise ConfigError("no instance given (positional argument or 'instance' field)")
    if isinstance(spec, dict):
        net = validate(spec)
    elif spec.startswith("builtin:") or spec in ("path6-fig5", "path5-fig10", "path4", "cycle5"):
        net = builtin_instance(spec)
    elif spec.lstrip().startswith("{"):
        try:
            net = validate(json.loads(spec))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"inline instance:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    else:
        path = Path(spec)
        if not path.exists():
            raise ConfigError(f"instance file {spec!r} not found")
        try:
            net = load_instance(path)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{spec}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if lam is not None:
        if len(lam) != net.n:
            raise ConfigError(f"field 'lam': expected {net.n} weights, got {len(lam)}")
        if any(w <= 0 for w in lam):
            raise ConfigError("field 'lam': weights must be positive")
        total = float(sum(lam))
        net = validate({**net.to_dict(), "lambda": [w / total for w in lam]})
    return net


def default_policies(spp: SppSolution) -> list[str]:
    return ["tp", "ttp", "lq", "pm"] if spp.tree is not None else ["lq", "pm"]


def scaled_instance(spp: SppSolution, v: float) -> MatchingNetwork:
    """Move lambda toward the degenerate boundary so that eps scales by about v.

    The smallest basic variable is lowered by (1 - v) eps with the others
    held fixed; renormalizing then gives eps' = v eps / sum(lambda').
    """
    net = spp.net
    vals = spp.basic_values()
    k = int(np.argmin(vals))
    kind, j = spp.basis[k]
    col = net.matching_matrix()[:, j] if kind == "z" else np.eye(net.n)[:, j]
    lam = net.lam_array - (1.0 - v) * spp.epsilon * col
    return validate({**net.to_dict(), "lambda": list(lam / lam.sum())})


# -- output helpers -----------------------------------------------------------------------


def _out_dir(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# -- subcommands ---------------------------------------------------------------------------


def cmd_validate(cfg: ExperimentConfig, out: Path | None) -> int:
    try:
        net = resolve_instance(cfg.instance, cfg.lam)
    except InvalidNetwork as exc:
        report = {"valid": False, "errors": [{"code": e.code, "message": str(e)} for e in exc.issues]}
        print(json.dumps(report, indent=2))
        if out:
            _write_json(out / "validate.json", report)
        return EXIT_CONFIG
    report = {
        "valid": True,
        "n": net.n,
        "matches": net.k,
        "acyclic": net.is_acyclic(),
        "bipartite": net.is_bipartite(),
    }
    print(json.dumps(report, indent=2))
    if out:
        _write_json(out / "validate.json", report)
    return EXIT_OK


def cmd_spp(cfg: ExperimentConfig, out: Path | None) -> int:
    spp = solve_spp(resolve_instance(cfg.instance, cfg.lam))
    d = spp.to_dict()
    print(json.dumps(d, indent=2))
    if out:
        _write_json(out / "spp.json", d)
    return EXIT_OK


def _policies(cfg: ExperimentConfig, spp: SppSolution) -> list[str]:
    names = cfg.policies or default_policies(spp)
    for p in names:
        make_policy(p, spp)  # fail early on unknown or inapplicable names
    return names


def cmd_simulate(cfg: ExperimentConfig, out: Path | None) -> int:
    spp = solve_spp(resolve_instance(cfg.instance, cfg.lam))
    names = _policies(cfg, spp)
    system = MatchingSystem(spp)
    pts = cfg.checkpoints if cfg.checkpoints is not None else geometric_checkpoints(cfg.T)
    arrivals = arrival_matrix(spp.net.lam, cfg.seed, cfg.replications, cfg.T)
    over = list(spp.over_demanded)
    totals = {}
    for name in names:
        _log(f"simulate: {name}")
        res = run_batch(system, make_policy(name, spp), arrivals, seed=cfg.seed, checkpoints=pts)
        totals[name] = res.Q[:, :, over].sum(axis=2).mean(axis=1)
        print(
            f"{name}: mean total queue at T={cfg.T}: {fmt(float(totals[name][-1]))}, "
            f"mean reward: {fmt(float(res.reward[-1].mean()))}"
        )
        if out:
            rows = (
                row
                for r in range(cfg.replications)
                for row in trajectory_rows(r, (res.state(c, r) for c in range(len(res.checkpoints))))
            )
            write_trajectory_csv(out / f"trajectory_{_safe(name)}.csv", rows)
    if out and cfg.figures:
        from .plotting import plot_queues

        plot_queues(list(pts), totals, out / "queues.png", title=str(cfg.instance))
    return EXIT_OK


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in name)


def cmd_regret(cfg: ExperimentConfig, out: Path | None) -> int:
    spp = solve_spp(resolve_instance(cfg.instance, cfg.lam))
    names = _policies(cfg, spp)
    if cfg.replications < 2:
        raise ConfigError("field 'replications': regret needs at least 2")
    report = regret_experiment(
        spp, names, cfg.T, cfg.replications, cfg.seed, cfg.checkpoints, progress=lambda p: _log(f"regret: {p}")
    )
    for name, pr in report.policies.items():
        print(
            f"{name}: sup mean regret {fmt(pr.sup_regret)} at t={report.checkpoints[pr.sup_index]}, "
            f"final-decade slope {fmt(report.final_decade_slope(name))}"
        )
    for w in report.warnings():
        _log(f"warning: {w}")
    if out:
        report.write_csv(out / "regret.csv")
        if cfg.figures:
            from .plotting import plot_regret

            plot_regret(report, out / "regret.png", title=str(cfg.instance))
    return EXIT_OK


SWEEP_COLUMNS = ("epsilon_scale", "epsilon", "policy", "sup_regret", "ci_half_at_sup", "final_mean_regret")


def cmd_sweep(cfg: ExperimentConfig, out: Path | None) -> int:
    base = solve_spp(resolve_instance(cfg.instance, cfg.lam))
    names = _policies(cfg, base)
    values = (cfg.sweep or DEFAULT_SWEEP)["values"]
    rows = []
    eps_list, sup = [], {n: [] for n in names}
    for v in values:
        spp = solve_spp(scaled_instance(base, float(v)))
        _log(f"sweep: scale {v}, epsilon {spp.epsilon:.6g}")
        report = regret_experiment(spp, names, cfg.T, cfg.replications, cfg.seed, cfg.checkpoints)
        eps_list.append(spp.epsilon)
        for name, pr in report.policies.items():
            rows.append((v, spp.epsilon, name, pr.sup_regret, pr.ci_half[pr.sup_index], pr.mean_regret[-1]))
            sup[name].append(pr.sup_regret)
            print(f"scale {fmt(float(v))} eps {fmt(spp.epsilon)} {name}: sup mean regret {fmt(pr.sup_regret)}")
    if out:
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for row in rows:
                w.writerow([fmt(row[0]), fmt(row[1]), row[2], *(fmt(x) for x in row[3:])])
        if cfg.figures:
            from .plotting import plot_sweep

            plot_sweep(eps_list, sup, out / "sweep.png", title=str(cfg.instance))
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, out: Path | None) -> int:
    from .verification import verify

    spp = solve_spp(resolve_instance(cfg.instance, cfg.lam))
    report = verify(spp, cfg.scale, cfg.seed, progress=lambda s: _log(f"verify: {s}"))
    for name, res in report["checks"].items():
        print(f"{'pass' if res['pass'] else 'FAIL'}  {name}")
    print("all checks pass" if report["pass"] else "verification FAILED")
    if out:
        _write_json(out / "verify.json", report)
    return EXIT_OK if report["pass"] else EXIT_VERIFY


COMMANDS = {
    "validate": cmd_validate,
    "spp": cmd_spp,
    "simulate": cmd_simulate,
    "regret": cmd_regret,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


# -- argument parsing --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("instance", nargs="?", help="builtin:<name>, a JSON file, or an inline JSON object")
    common.add_argument("--config", help="JSON experiment config; flags override its fields")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--T", type=int, dest="T", help="horizon")
    common.add_argument("--reps", type=int, dest="replications", help="replications")
    common.add_argument("--policies", help="comma list: pm,tp,ttp,lq,adversarial,static:<json>")
    common.add_argument("--lam", help="comma list of arrival weights (renormalized)")
    common.add_argument("--checkpoints", help="comma list of checkpoint times (default: 1,2,4,...,T)")
    common.add_argument("--values", help="sweep: comma list of epsilon scales in (0, 1]")
    common.add_argument("--scale", choices=("quick", "full"), help="verify: check sizes")
    common.add_argument("--figures", action="store_true", default=None, help="also render PNG figures into --out")

    parser = argparse.ArgumentParser(prog="dynmatch", description="Two-way dynamic matching simulator and checks.")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        sub.add_parser(mode, parents=[common])
    return parser


def _split(text: str, conv, name: str) -> list:
    try:
        return [conv(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--{name}: cannot parse {text!r}") from None


def _split_policies(text: str) -> list[str]:
    # static specs contain commas inside their JSON; split only at top level
    out, depth, cur = [], 0, ""
    for ch in text:
        if ch in "{[":
            depth += 1
        elif ch in "}]":
            depth -= 1
        if ch == "," and depth == 0:
            out.append(cur.strip())
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur.strip())
    return out


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, then the config file, then command-line flags."""
    base: dict[str, Any] = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {args.config!r} not found")
        base = ExperimentConfig.from_json(path.read_text(), str(path)).to_dict()
    base["mode"] = args.mode
    if args.instance is not None:
        base["instance"] = args.instance
    for name in ("seed", "T", "replications", "scale", "figures"):
        val = getattr(args, name)
        if val is not None:
            base[name] = val
    if args.policies is not None:
        base["policies"] = _split_policies(args.policies)
    if args.lam is not None:
        base["lam"] = _split(args.lam, float, "lam")
    if args.checkpoints is not None:
        base["checkpoints"] = _split(args.checkpoints, int, "checkpoints")
    if args.values is not None:
        base["sweep"] = {"parameter": "epsilon_scale", "values": _split(args.values, float, "values")}
    return ExperimentConfig.from_dict(base, "arguments")


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        out = _out_dir(args.out)
        return COMMANDS[cfg.mode](cfg, out)
    except GpgViolation as exc:
        _log(f"GPG violation: {exc}")
        _log(f"zero basic variables: {', '.join(exc.zero_basic)}")
        return EXIT_GPG
    except InvalidNetwork as exc:
        for issue in exc.issues:
            _log(f"invalid network [{issue.code}]: {issue}")
        return EXIT_CONFIG
    except (ConfigError, NetworkError, UnknownBuiltin, PlannerError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        _log(f"error: {msg}")
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()

"""Command-line entry point: ``stochquant run ...`` and ``stochquant verify SUITE``.

Exit codes: 0 success, 1 validation error, 2 numerical failure,
3 acceptance criterion failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import statistics as st
from .acceptance import DEFAULT_SEED, SUITES, classical_limit_sweep, run_suite
from .action import HamiltonianSpec, StochasticParams, verify_factorization
from .errors import ConfigurationError, StochQuantError
from .kernels import BACKEND
from .scenarios import PRESETS, Scenario, load_config, preset
from .trajectories import run_ensemble

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_CRITERION = 0, 1, 2, 3
FACTORIZATION_SAMPLES = 10**5


def _parse_sweep(values: list[str] | None):
    if not values:
        return None
    key, raw = values
    try:
        return key, [float(v) for v in raw.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"--sweep values must be numbers: {raw!r}") from exc


def _scenario(args) -> Scenario:
    if args.config and args.scenario:
        raise ConfigurationError("use either --config or --scenario, not both")
    if args.config:
        sc = load_config(args.config)
    elif args.scenario:
        sc = preset(args.scenario)
    else:
        raise ConfigurationError("run needs --config PATH or --scenario NAME")
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.trajectories is not None:
        over["trajectories"] = args.trajectories
    return sc.with_overrides(**over) if over else sc


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _is_compound_free(sc: Scenario) -> bool:
    h = sc.config["hamiltonian"]
    return sc.dim == 2 and h["vector_potential"]["kind"] == "none" and h["potential"]["kind"] in ("none", "harmonic", "linear", "constant")


def run_scenario(sc: Scenario, out_dir: Path) -> dict:
    """Run one scenario and write every artifact; returns the manifest."""
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts: list[Path] = []
    (out_dir / "scenario.yaml").write_text(sc.dump())
    artifacts.append(out_dir / "scenario.yaml")
    res = run_ensemble(sc, sc.trajectories, sc.t_final, sc.snapshot_times, workers=sc.config["run"]["workers"])
    for k, snap in enumerate(res.snapshots):
        base = out_dir / f"snapshot_{k:03d}"
        snap.wavefunction.to_csv(f"{base}_psi.csv")
        snap.wavefunction.to_json(f"{base}_psi.json")
        snap.hydro.to_csv(f"{base}_hydro.csv")
        artifacts += [Path(f"{base}_psi.csv"), Path(f"{base}_psi.json"), Path(f"{base}_hydro.csv")]
    res.histogram_csv(out_dir / "histograms.csv")
    res.to_json(out_dir / "ensemble.json")
    artifacts += [out_dir / "histograms.csv", out_dir / "ensemble.json"]
    if res.n <= 20000:
        res.positions_csv(out_dir / "positions.csv")
        artifacts.append(out_dir / "positions.csv")
    reports: list[st.ObservableReport] = []
    uncertainty = []
    if res.n > 0:
        for k in range(len(res.snapshots)):
            for ax in range(sc.dim):
                reports += [
                    st.mean_position_function(res, (lambda *q, ax=ax: q[ax]), k, name=f"<q{ax}>"),
                    st.position_variance(res, k, ax),
                    st.mean_momentum(res, k, ax),
                    st.mean_quadratic_momentum(res, 0.0, k, ax),
                ]
                uncertainty.append(st.uncertainty_report(res, k, ax).to_dict() | {"axis": ax, "snapshot": k})
            reports.append(st.mean_energy(res, snapshot=k))
            if sc.dim == 2:
                reports.append(st.mean_angular_momentum_2d(res, k))
        st.write_suite_csv(reports, out_dir / "observables.csv", sc.name)
        st.reports_json(reports, out_dir / "observables.json")
        (out_dir / "uncertainty.json").write_text(json.dumps(uncertainty, indent=2, sort_keys=True))
        artifacts += [out_dir / "observables.csv", out_dir / "observables.json", out_dir / "uncertainty.json"]
    if _is_compound_free(sc):
        m = sc.config["hamiltonian"]["mass"]
        m1, m2 = (m, m) if not isinstance(m, list) else m
        rep = verify_factorization(HamiltonianSpec(mass=m1, label="1"), HamiltonianSpec(mass=m2, label="2"),
                                   StochasticParams(sc.params().lambda_mag, sc.params().dt, seed=sc.params().seed),
                                   FACTORIZATION_SAMPLES)
        (out_dir / "factorization.json").write_text(rep.to_json())
        artifacts.append(out_dir / "factorization.json")
    manifest = {
        "scenario": sc.name,
        "seed": int(sc.params().seed),
        "config_sha256": sc.config_hash(),
        "version": __version__,
        "artifacts": {p.name: _sha256(p) for p in sorted(artifacts)},
        "warnings": res.warnings,
    }
    manifest["manifest_sha256"] = hashlib.sha256(json.dumps(manifest, sort_keys=True).encode()).hexdigest()
    # timestamps live outside the hashed body
    stamped = dict(manifest, created_unix=time.time(), kernel_backend=BACKEND)
    (out_dir / "manifest.json").write_text(json.dumps(stamped, indent=2, sort_keys=True))
    return manifest


def sweep_scenario(sc: Scenario, key: str, values: list[float], out_dir: Path) -> list[dict]:
    """Run a parameter sweep; for ``lambda_mag`` also tabulate RMS distance to the classical paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    classical = {}
    if key in ("lambda_mag", "stochastic.lambda_mag"):
        n = min(sc.trajectories, 4000)
        classical = classical_limit_sweep(values, sc.params().seed, n=n, scenario=sc)
    for v in values:
        sub = sc.with_overrides(**{key: v})
        man = run_scenario(sub, out_dir / f"{key.replace('.', '_')}={v:g}")
        row = {"key": key, "value": v, "manifest_sha256": man["manifest_sha256"]}
        if v in classical:
            row["rms_classical"] = classical[v]
        rows.append(row)
    with open(out_dir / "sweep.csv", "w") as fh:
        cols = ["key", "value", "rms_classical", "manifest_sha256"]
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(str(r.get(c, "")) for c in cols) + "\n")
    return rows


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochquant", description="Stochastic-action trajectory simulations and checks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    r = sub.add_parser("run", help="run a scenario and write CSV/JSON artifacts")
    r.add_argument("--config", type=Path, help="scenario YAML file")
    r.add_argument("--scenario", help="built-in scenario name")
    r.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    r.add_argument("--trajectories", type=int, help="ensemble size")
    r.add_argument("--out-dir", type=Path, default=Path("stochquant-out"))
    r.add_argument("--sweep", nargs=2, metavar=("KEY", "V1,V2,..."), help="sweep one config field")
    r.add_argument("--list-scenarios", action="store_true", help="list built-in scenarios and exit")

    v = sub.add_parser("verify", help="run an acceptance suite")
    v.add_argument("suite", help=f"one of {sorted(SUITES)}")
    v.add_argument("--out-dir", type=Path, default=Path("stochquant-verify"))
    v.add_argument("--seed", type=int, default=DEFAULT_SEED)
    v.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command is None:
        parser.print_help()
        return EXIT_VALIDATION
    where = getattr(args, "scenario", None) or (str(args.config) if getattr(args, "config", None) else None)
    if args.command == "verify":
        where = f"suite {args.suite}"
    try:
        if args.command == "run":
            if args.list_scenarios:
                for name in PRESETS:
                    print(name)
                return EXIT_OK
            sc = _scenario(args)
            where = sc.name
            sweep = _parse_sweep(args.sweep)
            if sweep:
                rows = sweep_scenario(sc, sweep[0], sweep[1], args.out_dir)
                for row in rows:
                    extra = f"  rms_classical={row['rms_classical']:.6g}" if "rms_classical" in row else ""
                    print(f"{row['key']}={row['value']:g}{extra}")
            else:
                man = run_scenario(sc, args.out_dir)
                print(f"{sc.name}: manifest {man['manifest_sha256']}")
                for w in man["warnings"]:
                    print(f"warning: {w}", file=sys.stderr)
            return EXIT_OK
        results = run_suite(args.suite, args.seed, only=args.only, out_dir=args.out_dir)
        failed = [r for r in results if not r.passed]
        if failed:
            names = ", ".join(f"{r.number} ({r.name})" for r in failed)
            print(f"FAILED criteria: {names}", file=sys.stderr)
            return EXIT_CRITERION
        print(f"all {len(results)} criteria passed")
        return EXIT_OK
    except ConfigurationError as exc:
        print(f"error [{exc.module}] ({where or 'no scenario'}): {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StochQuantError as exc:
        print(f"error [{exc.module}] ({where or 'no scenario'}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error [core_numerics] ({where or 'no scenario'}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

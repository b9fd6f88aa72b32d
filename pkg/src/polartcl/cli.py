"""Command-line interface: subcommand dispatch, run orchestration, artifact
and manifest management."""

import hashlib
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, markov, observables, oracle, polaron, wick
from .bath import bcf_two_time, BathSignature
from .config import ConfigError, parse_config
from .propagator import (IntegratorError, PhAmplitude, compile_generator,
                         propagate, save_trajectory, load_trajectory,
                         save_checkpoint)
from .system import IntegralParseError, SymmetryError, validate_symmetries
from .units import HARTREE_CM, HARTREE_EV

EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_INTEGRATOR = 4


def _load(config_path):
    try:
        return parse_config(config_path)
    except (ConfigError, IntegralParseError, SymmetryError, KeyError,
            FileNotFoundError, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_PARSE)


def _manifest(run, out_dir, extra=None):
    catalog = wick.catalog_text(wick.second_order_terms())
    lines = [
        f"tool polartcl {__version__}",
        f"config_hash {run.config_hash}",
        f"catalog_hash {hashlib.sha256(catalog.encode()).hexdigest()[:16]}",
    ]
    for key, value in (extra or {}).items():
        lines.append(f"{key} {value}")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


@click.group()
@click.version_option(__version__)
def main():
    """Correlated particle-hole dynamics in a harmonic boson bath."""


@main.command()
@click.option("--untransformed", is_flag=True, help="one-body bath catalog")
@click.option("--no-hermitize", is_flag=True)
@click.option("-o", "--output", type=click.Path(), default=None)
def terms(untransformed, no_hermitize, output):
    """Dump the generated equation-of-motion term catalog."""
    first = wick.first_order_terms()
    if untransformed:
        second = wick.untransformed_terms(hermitize=not no_hermitize)
    else:
        second = wick.second_order_terms(hermitize=not no_hermitize)
    text = ("# first-order terms\n" + wick.catalog_text(first)
            + "# second-order terms\n" + wick.catalog_text(second))
    if output:
        Path(output).write_text(text)
        click.echo(f"wrote {output}")
    else:
        click.echo(text)


@main.command()
@click.argument("config", type=click.Path(exists=True))
def transform(config):
    """Polaron-transform the system and report the shifts."""
    run = _load(config)
    pol = polaron.transform_integrals(run.system, run.bath)
    click.echo("orbital  eps        lambda     eps_tilde")
    for p in range(run.system.n_orb):
        click.echo(f"{p:4d}   {run.system.eps[p]: .6f}  {pol.lam[p]: .6f} "
                   f" {pol.eps_tilde[p]: .6f}")
    dv = np.abs(pol.v_tilde - run.system.v).max()
    click.echo(f"max |V_tilde - V| = {dv:.6e}")


@main.command()
@click.argument("config", type=click.Path(exists=True))
def propagate_cmd(config):
    """Propagate the kicked system and write trajectories."""
    _run_propagation(config)


def _run_propagation(config):
    run = _load(config)
    out = run.out_dir
    out.mkdir(parents=True, exist_ok=True)
    trajs = {}
    try:
        compiled = compile_generator(run.system, run.bath, run.propagation)
        for direction in run.kick:
            amp0 = observables.dipole_kick(run.system, direction)
            traj = propagate(run.system, run.bath, run.propagation, amp0,
                             compiled=compiled, kick=direction)
            save_trajectory(traj, out / f"trajectory_{direction}.txt")
            trajs[direction] = traj
    except IntegratorError as exc:
        click.echo(f"integrator error: {exc}", err=True)
        sys.exit(EXIT_INTEGRATOR)
    _manifest(run, out, {"subcommand": "propagate",
                         "mode": run.propagation.mode})
    click.echo(f"wrote {len(trajs)} trajectories to {out}")
    return run, trajs


@main.command()
@click.argument("config", type=click.Path(exists=True))
@click.option("--markov", "use_markov", is_flag=True,
              help="pole table from the effective generator")
def spectrum(config, use_markov):
    """Fourier-transform dipole correlations into absorption spectra."""
    run = _load(config)
    out = run.out_dir
    if use_markov:
        rates = markov.build_rates(run.system, run.bath, run.propagation, run.t_c)
        mu_ph = observables.dipole_kick(run.system, run.kick[0]).data
        poles = markov.markov_spectrum(rates, mu_ph).sorted_by_strength()
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "poles.txt", "w") as handle:
            handle.write("# pole_hartree pole_ev width strength_abs\n")
            for p, w, s in zip(poles.poles, poles.widths, poles.strengths):
                handle.write(f"{p:.8f} {p * HARTREE_EV:.5f} {w:.3e} {abs(s):.5e}\n")
        _manifest(run, out, {"subcommand": "spectrum-markov"})
        click.echo(f"wrote {out / 'poles.txt'}")
        return
    run2, trajs = _run_propagation(config)
    for direction, traj in trajs.items():
        corr = observables.dipole_correlation(
            traj, run.system, direction, bath=run.bath, dressed=run.dressed)
        spec = observables.spectrum(traj.times, corr, window=run.window or None,
                                    normalize=run.normalize)
        with open(out / f"spectrum_{direction}.txt", "w") as handle:
            handle.write("# freq_hartree freq_ev freq_cm re im averaged\n")
            for k in range(len(spec.freqs)):
                f = spec.freqs[k]
                handle.write(f"{f:.8f} {f * HARTREE_EV:.5f} {f * HARTREE_CM:.2f} "
                             f"{spec.amplitude[k].real:.6e} "
                             f"{spec.amplitude[k].imag:.6e} "
                             f"{spec.averaged[k]:.6e}\n")
    click.echo(f"wrote spectra to {out}")


@main.command()
@click.argument("config", type=click.Path(exists=True))
def rates(config):
    """Markovian rate tensors and the effective generator."""
    run = _load(config)
    out = run.out_dir
    out.mkdir(parents=True, exist_ok=True)
    compiled = compile_generator(run.system, run.bath, run.propagation)
    rset = markov.build_rates(run.system, run.bath, run.propagation, run.t_c,
                              compiled=compiled)
    np.savetxt(out / "g_eff_re.txt", rset.g_eff.real, fmt="%.10e")
    np.savetxt(out / "g_eff_im.txt", rset.g_eff.imag, fmt="%.10e")
    with open(out / "rates.txt", "w") as handle:
        handle.write(f"# pooled kernel rates; t_c = {rset.t_c}\n")
        handle.write(f"growth_rate {rset.growth_rate():.6e}\n")
        for name, arr in (("const", rset.rates_const),
                          ("two_time", rset.rates_two_time),
                          ("mode_f", rset.rates_mode_f)):
            handle.write(f"{name} {arr.size}\n")
            for val in arr:
                handle.write(f"  {val.real:.8e} {val.imag:.8e}\n")
    _manifest(run, out, {"subcommand": "rates"})
    click.echo(f"wrote {out / 'rates.txt'}")


@main.command()
@click.argument("config", type=click.Path(exists=True))
def validate(config):
    """Run the brute-force oracle suite on the configured model."""
    run = _load(config)
    system = run.system
    failures = 0

    report = validate_symmetries(system)
    click.echo("tensor symmetries:")
    click.echo(str(report))
    failures += 0 if report.ok else 1

    if system.n_orb <= 8:
        terms2 = wick.second_order_terms(hermitize=False)
        dev = wick.validate_against_superoperator(terms2, system, t=0.7, s=0.3, rng=0)
        ok = dev < 1e-10
        click.echo(f"term generator vs dense superoperator: {dev:.3e} "
                   f"[{'pass' if ok else 'FAIL'}]")
        failures += 0 if ok else 1
    else:
        click.echo("term generator check skipped (basis too large)")

    rep = oracle.FockSpaceRep(min(system.n_orb, 8), system.n_occ)
    acomm = oracle.anticommutator_check(rep)
    ok = acomm < 1e-13
    click.echo(f"anticommutators: {acomm:.3e} [{'pass' if ok else 'FAIL'}]")
    failures += 0 if ok else 1

    omegas, mtilde = run.bath.tables(system.n_orb)
    if omegas.size and omegas.size <= 2:
        sig = BathSignature(t_slots=((1, system.n_orb - 1), (-1, 0)),
                            s_slots=((1, system.n_orb - 1), (-1, 0)))
        closed = bcf_two_time(sig, run.bath, 3.0, n_orb=system.n_orb)
        u, v = sig.signed_sums(mtilde)
        ops = [(u, 3.0), (v, 0.0)]
        exact = oracle.boson_trace(ops, omegas, run.bath.beta, n_max=60)
        dev = abs(closed - exact)
        ok = dev < 1e-7
        click.echo(f"bath correlation vs truncated-boson trace: {dev:.3e} "
                   f"[{'pass' if ok else 'FAIL'}]")
        failures += 0 if ok else 1
    else:
        click.echo("bath trace check skipped (needs 1-2 discrete modes)")

    if failures:
        click.echo(f"{failures} check(s) failed", err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo("all checks passed")


main.add_command(propagate_cmd, name="propagate")

if __name__ == "__main__":
    main()

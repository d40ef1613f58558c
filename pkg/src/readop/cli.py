"""Command-line front end: config ingestion, builds, checks and exports."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import click
import mpmath
from gmpy2 import mpq

from .basis import FVector
from .errors import Eq5Exceeded, OutOfHorizon, ParseError, ReadOpError
from .factorize import build_factorization, check_ba, check_kernel_localization, split_T0
from .operator import assemble, sk_split, to_triplets
from .report import CertReport, make_report, render_reports
from .scalars import format_real, parse_scalar, set_precision
from .schedule import (Lp, Schedule, ScheduleParams, build_schedule, desk_params, parse_params,
                       params_to_text, theorem1_desk_params, validate_schedule)
from .variants import (HilbertInstance, build_theorem1, check_copy_shift, check_fact1bis,
                       check_propnewC, demo_hypercyclic, hilbert_params, hypercyclic_injector)
from .verify import (check_b_damping, check_fact_b, check_prop3, check_q_norm, check_tail_bound,
                     demo_p3, orbit_distance, p3_injector)

COMMANDS = ("build", "validate", "verify", "orbit", "demo", "factorize", "export")
VARIANTS = ("th2", "th1", "hilbert")
VERIFY_CHECKS = ("fact-b", "tail", "b-damping", "prop3", "q-norm", "boundedness")
VARIANT_CHECKS = {"th1": ("fact1bis", "copy-shift"), "hilbert": ("u0-norm", "distance", "t-x0")}
MIN_PRECISION = 128

# Tail columns examined beyond nu_n when the next landmark is out of reach.
TAIL_WINDOW = 4096
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(ReadOpError):
    pass


@dataclass
class RunConfig:
    command: str
    schedule: Path | None = None
    variant: str = "th2"
    checks: tuple[str, ...] = ()
    steps: tuple[int, ...] = ()
    vectors: Path | None = None
    out: Path | None = None
    precision: int = 256
    seed: int = 0
    p: Fraction = Fraction(2)
    N: int | None = None
    n: int | None = None
    orbit_horizon: int = 256
    extra: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# vector files


def ingest_vectors(path: Path | str, schedule: Schedule | None = None) -> list[FVector]:
    """Read ``index value`` blocks separated by blank lines as f-coordinate vectors."""
    vectors: list[FVector] = []
    block: dict[int, object] = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines() + [""], 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            if block:
                vectors.append(FVector(block))
                block = {}
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"{path}:{lineno}: expected 'index value'")
        try:
            j = int(parts[0])
            v = parse_scalar(parts[1])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        if j < 0:
            raise ParseError(f"{path}:{lineno}: negative index")
        if j in block:
            raise ParseError(f"{path}:{lineno}: index {j} repeated")
        block[j] = v
    if schedule is not None:
        for x in vectors:
            if x.max_index() > schedule.horizon:
                raise OutOfHorizon(f"vector index {x.max_index()} beyond horizon {schedule.horizon}")
    return [x for x in vectors if not x.is_zero()]


# --------------------------------------------------------------------------
# builds


def load_params(config: RunConfig) -> ScheduleParams:
    if config.schedule is not None:
        if not config.schedule.is_file():
            raise UsageError(f"schedule file {config.schedule} not found")
        params = parse_params(config.schedule.read_text())
    elif config.variant == "th1":
        params = theorem1_desk_params()
    elif config.variant == "hilbert":
        params = hilbert_params()
    else:
        params = desk_params()
    if config.command == "factorize":
        params = replace(params, space=Lp(config.p))
    return params


def build_for(config: RunConfig, params: ScheduleParams, vectors=(), inject_steps=None):
    """Schedule (and variant instance) for the config; vectors drive co-design injection."""
    vectors = list(vectors)
    if config.variant == "th1":
        inject = None
        if vectors:
            N = config.N or 1
            steps = inject_steps or {config.n or params.n_max}
            inject = hypercyclic_injector(vectors, N, steps)
        inst = build_theorem1(params, inject)
        return inst.schedule, inst
    if config.variant == "hilbert":
        sched = build_schedule(params)
        return sched, HilbertInstance(sched, Fraction(params.epsilon))
    inject = p3_injector(vectors, inject_steps or {1}) if vectors else None
    sched = build_schedule(params, inject)
    return sched, None


def _steps(config: RunConfig, schedule: Schedule) -> list[int]:
    steps = list(config.steps) or [1]
    for n in steps:
        if not 1 <= n <= schedule.n_built:
            raise UsageError(f"step {n} is not built (n_max = {schedule.n_built})")
    return steps


# --------------------------------------------------------------------------
# commands


def _cmd_build(config: RunConfig, outputs: dict[str, str]) -> list[CertReport]:
    params = load_params(config)
    sched, _ = build_for(config, params)
    steps = set(config.steps) if config.steps else None
    outputs["schedule.txt"] = params_to_text(params) + sched.dump(steps)
    return []


def _cmd_validate(config: RunConfig, outputs) -> list[CertReport]:
    params = load_params(config)
    sched, _ = build_for(config, params)
    checks = list(config.checks) or "all"
    return validate_schedule(sched, checks)


def _verify_step(config: RunConfig, sched: Schedule, check: str, n: int) -> list[CertReport]:
    if check == "fact-b":
        return [check_fact_b(sched, n, seed=config.seed)]
    if check == "tail":
        st = sched.step(n)
        cut = None
        if n + 1 > sched.n_built or st.xi_next - st.nu > (1 << 20):
            cut = st.nu + TAIL_WINDOW
        return [check_tail_bound(sched, n, n_cut=cut)]
    if check == "b-damping":
        return [check_b_damping(sched, n, seed=config.seed)]
    if check == "prop3":
        return [check_prop3(sched, n, seed=config.seed)]
    if check == "q-norm":
        return [check_q_norm(sched, n)]
    if check == "boundedness":
        st = sched.step(n)
        top, caveat = st.xi_next, ""
        if top - st.xi > (1 << 20):
            top = st.xi + TAIL_WINDOW
            caveat = f"columns up to {top} only"
        dec = sk_split(sched, top, raise_on_budget=False)
        rho = sched.params.rho
        return [make_report(f"boundedness.n{n}", "nuclear part of T below rho",
                            mpq(rho.numerator, rho.denominator), dec.nuclear_bound, strict=True,
                            caveat=caveat, details={"jtilde": len(dec.jtilde)})]
    raise UsageError(f"unknown check {check!r}")


def _cmd_verify(config: RunConfig, outputs) -> list[CertReport]:
    params = load_params(config)
    sched, inst = build_for(config, params)
    extra = VARIANT_CHECKS.get(config.variant, ())
    checks = list(config.checks) or ["fact-b", "tail", "b-damping", "prop3"]
    for c in checks:
        if c not in VERIFY_CHECKS and c not in extra:
            raise UsageError(f"unknown check {c!r} for variant {config.variant}")
    reports: list[CertReport] = []
    for n in _steps(config, sched):
        for c in checks:
            if c in VERIFY_CHECKS:
                reports.extend(_verify_step(config, sched, c, n))
    for c in checks:
        if c == "fact1bis":
            reports.extend(check_fact1bis(inst))
        elif c == "copy-shift":
            reports.append(check_copy_shift(inst))
        elif c == "u0-norm":
            enc = inst.u0_norm_enclosure()
            eps = mpmath.mpf(inst.epsilon.numerator) / inst.epsilon.denominator
            reports.append(_enclosure_report("hilbert.u0-norm", enc, lambda: eps / mpmath.sqrt(2)))
        elif c == "distance":
            for n in range(1, inst.n_built + 1):
                reports.append(_enclosure_report(f"hilbert.distance.n{n}", inst.distance_sq(n),
                                                 lambda n=n: hilbert_tail_closed_form(inst.epsilon, n)))
        elif c == "t-x0":
            reports.append(inst.t_x0_report())
    return reports


ENCLOSURE_BITS = 512


def hilbert_tail_closed_form(epsilon: Fraction, n: int):
    """(3 eps^2 / pi^2) * sum_{j > n} j^-2 through the Hurwitz zeta function."""
    eps = mpmath.mpf(epsilon.numerator) / epsilon.denominator
    return 3 * eps * eps / mpmath.pi ** 2 * mpmath.zeta(2, n + 1)


def _enclosure_report(check_id: str, enc, closed_form) -> CertReport:
    """Width of an interval enclosure, failing when it misses the closed form."""
    with mpmath.workprec(ENCLOSURE_BITS):
        lo, hi = mpmath.mpf(enc.a), mpmath.mpf(enc.b)
        width = hi - lo
        value = closed_form()
        contains = lo <= value <= hi
        details = {"contains": contains, "lower": mpmath.nstr(lo, 40), "upper": mpmath.nstr(hi, 40)}
        measured = parse_scalar(mpmath.nstr(width, 30, min_fixed=1, max_fixed=0)) if width else mpq(0)
    rep = make_report(check_id, "interval enclosure of width below 2^-100", mpq(1, 1 << 100), measured,
                      details=details)
    return rep if contains else replace(rep, passed=False, caveat="enclosure misses the closed form")


def _default_vectors() -> list[FVector]:
    return [FVector.unit(0)]


def _cmd_demo(config: RunConfig, outputs) -> list[CertReport]:
    params = load_params(config)
    vectors = ingest_vectors(config.vectors) if config.vectors else _default_vectors()
    reports: list[CertReport] = []
    lines = []
    for i, x in enumerate(vectors):
        # one co-designed build per vector keeps the (c)-fan small
        sched, inst = build_for(config, params, [x])
        if x.max_index() > sched.horizon:
            raise OutOfHorizon(f"vector {i} leaves the horizon")
        if config.variant == "th1":
            N = config.N or 1
            n = config.n or sched.n_built
            res = demo_hypercyclic(inst, x, N, n)
            reports.append(make_report(f"demo.th1.v{i}", "T^c x near e_0", res.claimed, res.dist,
                                       strict=True, caveat=res.caveat, details={"c": res.c}))
        elif config.variant == "hilbert":
            reports.append(replace(check_propnewC(inst, x), check_id=f"hilbert.propnewC.v{i}"))
            continue
        else:
            res = demo_p3(sched, x, 1)
            reports.append(make_report(f"demo.p3.v{i}", "T^c x near g_0", res.claimed, res.dist,
                                       strict=True, details={"c": res.c}))
            powers = list(range(config.orbit_horizon + 1)) + list(sched.step(1).c)
            best_c, best = orbit_distance(sched, x, FVector.unit(0), max(powers), powers)
            reports.append(make_report(f"demo.orbit.v{i}", "brute-force orbit at least as close",
                                       res.dist, best, details={"c": best_c}))
        lines.append(f"v{i} c={res.c} dist={format_real(res.dist)}")
    outputs["demo.txt"] = "\n".join(lines) + ("\n" if lines else "")
    return reports


def _cmd_orbit(config: RunConfig, outputs) -> list[CertReport]:
    params = load_params(config)
    sched, _ = build_for(config, params)
    vectors = ingest_vectors(config.vectors, sched) if config.vectors else _default_vectors()
    powers = list(range(config.orbit_horizon + 1))
    for st in sched.steps:
        if st.c:
            powers.extend(st.c)
    lines = []
    for i, x in enumerate(vectors):
        usable = [c for c in powers if c + x.max_index() <= sched.horizon]
        c, d = orbit_distance(sched, x, FVector.unit(0), max(usable), usable)
        lines.append(f"v{i} c={c} dist={format_real(d)}")
    outputs["orbit.txt"] = "\n".join(lines) + ("\n" if lines else "")
    return []


def _cmd_factorize(config: RunConfig, outputs) -> list[CertReport]:
    params = load_params(config)
    sched, _ = build_for(config, params)
    N = config.N if config.N is not None else sched.step(1).nu
    note = ""
    try:
        fact = build_factorization(sched, N, config.p)
    except Eq5Exceeded as exc:
        fact = exc.factorization
        note = f"# eq5 partial {format_real(fact.eq5_partial)} exceeds budget {params.eq5_budget}\n"
    outputs["A.triplets"] = to_triplets(fact.A)
    outputs["B.triplets"] = to_triplets(fact.B)
    reports = [check_ba(fact), check_kernel_localization(fact), split_T0(fact)]
    if note:
        outputs["eq5.txt"] = note
    config.extra["eq5_failed"] = bool(note)
    return reports


def _cmd_export(config: RunConfig, outputs) -> list[CertReport]:
    params = load_params(config)
    sched, _ = build_for(config, params)
    N = config.N if config.N is not None else sched.step(1).nu
    outputs["T.triplets"] = to_triplets(assemble(sched, N))
    outputs["schedule.txt"] = params_to_text(params) + sched.dump({1})
    return []


HANDLERS = {
    "build": _cmd_build,
    "validate": _cmd_validate,
    "verify": _cmd_verify,
    "orbit": _cmd_orbit,
    "demo": _cmd_demo,
    "factorize": _cmd_factorize,
    "export": _cmd_export,
}


def _emit(config: RunConfig, outputs: dict[str, str], echo) -> None:
    if config.out is None:
        for name in sorted(outputs):
            echo(f"== {name}")
            echo(outputs[name], nl=False)
        return
    config.out.mkdir(parents=True, exist_ok=True)
    for name in sorted(outputs):
        (config.out / name).write_text(outputs[name])


def run(config: RunConfig, echo=click.echo) -> int:
    """Execute one command; 0 when every report passes, 1 on a failed check, 2 on usage errors."""
    if config.command not in HANDLERS:
        echo(f"error: unknown command {config.command!r}", err=True)
        return EXIT_USAGE
    if config.variant not in VARIANTS:
        echo(f"error: unknown variant {config.variant!r}", err=True)
        return EXIT_USAGE
    if config.precision < MIN_PRECISION:
        echo(f"error: precision must be at least {MIN_PRECISION} bits", err=True)
        return EXIT_USAGE
    set_precision(config.precision)
    outputs: dict[str, str] = {}
    try:
        reports = HANDLERS[config.command](config, outputs)
    except (UsageError, ParseError, OutOfHorizon, FileNotFoundError) as exc:
        echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    except ReadOpError as exc:
        if type(exc).__name__ in ("InvalidParams", "GrowthOverflow", "StepNotBuilt"):
            echo(f"error: {exc}", err=True)
            return EXIT_USAGE
        echo(f"check error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_FAIL
    if reports:
        outputs["reports.txt"] = render_reports(reports)
    _emit(config, outputs, echo)
    failed = any(not r.passed for r in reports) or config.extra.get("eq5_failed", False)
    return EXIT_FAIL if failed else EXIT_OK


# --------------------------------------------------------------------------
# click wiring


def _split(text: str | None) -> tuple[str, ...]:
    return tuple(s.strip() for s in text.split(",") if s.strip()) if text else ()


def _parse_steps(text: str | None) -> tuple[int, ...]:
    """``k`` means steps 1..k; a comma list names steps explicitly."""
    if not text:
        return ()
    try:
        if "," in text:
            return tuple(int(s) for s in _split(text))
        k = int(text)
    except ValueError as exc:
        raise click.BadParameter(f"bad step list {text!r}") from exc
    return tuple(range(1, k + 1))


def _common(f):
    options = [
        click.option("--schedule", type=click.Path(path_type=Path), default=None,
                     help="key = value schedule config"),
        click.option("--variant", type=click.Choice(VARIANTS), default="th2"),
        click.option("--steps", default=None, help="k for steps 1..k, or a comma list"),
        click.option("--checks", default=None, help="comma-separated check names"),
        click.option("--vectors", type=click.Path(path_type=Path), default=None,
                     help="test vectors, 'index value' blocks"),
        click.option("--precision", type=int, default=256, help="working precision in bits"),
        click.option("--out", type=click.Path(path_type=Path), default=None,
                     help="output directory (stdout when omitted)"),
        click.option("--seed", type=int, default=0),
    ]
    for opt in reversed(options):
        f = opt(f)
    return f


def _config(command: str, **kw) -> RunConfig:
    return RunConfig(
        command=command,
        schedule=kw.get("schedule"),
        variant=kw.get("variant", "th2"),
        checks=_split(kw.get("checks")),
        steps=_parse_steps(kw.get("steps")),
        vectors=kw.get("vectors"),
        out=kw.get("out"),
        precision=kw.get("precision", 256),
        seed=kw.get("seed", 0),
        p=Fraction(kw["p"]) if kw.get("p") else Fraction(2),
        N=kw.get("N"),
        n=kw.get("n"),
        orbit_horizon=kw.get("orbit_horizon") or 256,
    )


def _finish(command: str, **kw) -> None:
    sys.exit(run(_config(command, **kw)))


@click.group()
def main():
    """Build, verify and export truncated Read-type operators."""


@main.command()
@_common
def build(**kw):
    """Build a schedule and write its interval dump."""
    _finish("build", **kw)


@main.command()
@_common
def validate(**kw):
    """Run the schedule validation checks."""
    _finish("validate", **kw)


@main.command()
@_common
def verify(**kw):
    """Certify the quantitative facts on the selected steps."""
    _finish("verify", **kw)


@main.command()
@_common
@click.option("--orbit-horizon", type=int, default=256, help="powers 0..H tried besides the c landmarks")
def orbit(**kw):
    """Brute-force orbit distances of the test vectors to g_0."""
    _finish("orbit", **kw)


@main.command()
@_common
@click.option("--N", "N", type=int, default=None, help="target level for the multi-interval demo")
@click.option("--n", "n", type=int, default=None, help="step used by the multi-interval demo")
@click.option("--orbit-horizon", type=int, default=256)
def demo(**kw):
    """Co-designed orbit demos, one build per test vector."""
    _finish("demo", **kw)


@main.command()
@_common
@click.option("--p", "p", default="2", help="exponent of the l_p space, 1 < p < inf")
@click.option("--N", "N", type=int, default=None, help="truncation index (default nu_1)")
def factorize(**kw):
    """Factor T = BA through l_p and emit A, B and three reports."""
    _finish("factorize", **kw)


@main.command()
@_common
@click.option("--N", "N", type=int, default=None, help="truncation index (default nu_1)")
def export(**kw):
    """Export the columns of T on F_N as triplets."""
    _finish("export", **kw)


if __name__ == "__main__":
    main()

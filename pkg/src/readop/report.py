"""Certificate records and their line-oriented serialisation."""

from __future__ import annotations

from dataclasses import dataclass, field

from .scalars import format_real


@dataclass(frozen=True)
class CertReport:
    """Outcome of one certified inequality ``measured <= claimed``.

    Values may be plain reals or log2 quantities; ``scale`` says which, so a
    reader never has to guess.  ``strict`` turns the test into ``<``.
    """

    check_id: str
    anchor: str
    claimed: object
    measured: object
    passed: bool
    caveat: str = ""
    scale: str = "linear"
    strict: bool = False
    details: dict = field(default_factory=dict, compare=False)

    @property
    def slack(self):
        return self.claimed - self.measured

    def line(self) -> str:
        status = "pass" if self.passed else "fail"
        return (f"{self.check_id} {format_real(self.claimed)} {format_real(self.measured)} "
                f"{format_real(self.slack)} {status}")


def make_report(check_id: str, anchor: str, claimed, measured, *, strict: bool = False,
                caveat: str = "", scale: str = "linear", details: dict | None = None) -> CertReport:
    ok = measured < claimed if strict else measured <= claimed
    return CertReport(check_id, anchor, claimed, measured, bool(ok), caveat, scale, strict,
                      details or {})


def render_reports(reports: list[CertReport]) -> str:
    """One line per report followed by a summary block."""
    lines = [r.line() for r in reports]
    failed = [r.check_id for r in reports if not r.passed]
    lines.append("# summary")
    lines.append(f"# total {len(reports)} passed {len(reports) - len(failed)} failed {len(failed)}")
    for r in reports:
        note = f"# {r.check_id} anchor={r.anchor} scale={r.scale}"
        if r.caveat:
            note += f" caveat={r.caveat}"
        lines.append(note)
    return "\n".join(lines) + "\n"

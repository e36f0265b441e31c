"""Per-cycle progress records shared by the fitting engines."""

from dataclasses import dataclass, field


@dataclass
class FitReport:
    """Tab-separated progress log: one row per cycle.

    `value` is the engine's monitored quantity: a log-probability lower
    bound for variational runs, a Poisson log likelihood for the
    multiplicative factoriser, and a conditional log-likelihood estimate
    (given the currently sampled latents, not a bound) for Gibbs chains.
    """

    value_label: str = "total_bound"
    rows: list = field(default_factory=list)

    def add(self, cycle, value, seconds):
        self.rows.append((int(cycle), float(value), float(seconds)))

    @property
    def final_value(self):
        return self.rows[-1][1] if self.rows else float("nan")

    def to_tsv(self, include_seconds=True):
        header = f"cycle\t{self.value_label}"
        if include_seconds:
            header += "\twall_seconds"
        lines = [header]
        for cycle, value, seconds in self.rows:
            line = f"{cycle}\t{value!r}"
            if include_seconds:
                line += f"\t{seconds!r}"
            lines.append(line)
        return "\n".join(lines) + "\n"

"""First-order command filters: tau * xc' + xc = xd."""

from dataclasses import dataclass

from .errors import NonPositiveTau


@dataclass
class CommandFilter:
    tau: float
    x_c: float = 0.0

    def __post_init__(self):
        if not (self.tau > 0):
            raise NonPositiveTau(f"filter time constant must be positive, got {self.tau}")

    def error(self, x_d):
        """Filtering error x_c - x_d."""
        return self.x_c - x_d


def init_filter(tau, x_d0):
    """Filter started on its input, so the filtering error is zero at t = 0."""
    return CommandFilter(tau=tau, x_c=float(x_d0))


def filter_derivative(f, x_d):
    return (x_d - f.x_c) / f.tau


def filtered_derivative_estimate(f, x_d):
    # The filter ODE itself is the derivative estimate used by the control laws.
    return filter_derivative(f, x_d)

"""Exception types used across the package."""


class SingularConfigError(RuntimeError):
    """A kinematic map lost rank (parallel cables, degenerate constraint block)."""


class HierarchySingularError(RuntimeError):
    """An augmented task Jacobian lost row rank while building the hierarchy."""


class CableRangeError(ValueError):
    """A commanded platform position needs cable lengths outside the winch range.

    ``violations`` is a list of (cable_index, length, lo, hi) tuples, one per
    offending cable, cable_index counting from 1.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        parts = ", ".join(
            f"cable {i}: length {l:.4f} m outside [{lo}, {hi}] m"
            for i, l, lo, hi in self.violations
        )
        super().__init__(f"cable length out of range: {parts}")


class DivergenceError(RuntimeError):
    """Simulation state left the configured bounds."""

    def __init__(self, time, detail):
        self.time = time
        super().__init__(f"simulation diverged at t={time:.4f} s: {detail}")


class SchemaError(ValueError):
    """Config file violates the documented schema.

    ``problems`` is a list of human-readable strings, each naming the
    offending field (and line where available).
    """

    def __init__(self, path, problems):
        self.path = path
        self.problems = list(problems)
        msg = f"{path}: " + "; ".join(self.problems)
        super().__init__(msg)

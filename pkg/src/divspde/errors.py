"""Exception types. Numerical failures carry enough context for a machine-readable record."""


class DivSpdeError(Exception):
    kind = "error"

    def record(self):
        return {"kind": self.kind, "message": str(self)}


class NumericalFailure(DivSpdeError):
    kind = "numerical_failure"


class NonConvergence(NumericalFailure):
    kind = "non_convergence"

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = float(residual)
        self.iterations = int(iterations)

    def record(self):
        return {**super().record(), "residual": self.residual, "iterations": self.iterations}


class LinearSolveFailure(NumericalFailure):
    kind = "linear_solve_failure"

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = float(residual)

    def record(self):
        return {**super().record(), "residual": self.residual}


class StabilityViolation(NumericalFailure):
    kind = "stability_violation"

    def __init__(self, message, tau, suggested_tau):
        super().__init__(message)
        self.tau = float(tau)
        self.suggested_tau = float(suggested_tau)

    def record(self):
        return {**super().record(), "tau": self.tau, "suggested_tau": self.suggested_tau}


class PicardDivergence(NumericalFailure):
    kind = "picard_divergence"

    def __init__(self, message, distances=(), alpha=0.0):
        super().__init__(message)
        self.distances = [float(d) for d in distances]
        self.alpha = float(alpha)

    def record(self):
        return {**super().record(), "distances": self.distances, "alpha": self.alpha,
                "suggested_alpha": 2.0 * self.alpha if self.alpha > 0 else 1.0}


class MissingFlux(DivSpdeError):
    kind = "missing_flux"


class ConfigError(DivSpdeError):
    kind = "config_invalid"

    def __init__(self, message, kind=None):
        super().__init__(message)
        if kind is not None:
            self.kind = kind

"""Exception types shared by the modules and the CLI."""


class XXZError(Exception):
    """Base class; the CLI maps subclasses onto exit codes."""


class ValidationError(XXZError, ValueError):
    """Bad input parameters (exit code 2)."""


class ContractViolation(XXZError):
    """A numerical residual exceeded its stated tolerance (exit code 3)."""

    def __init__(self, module, contract, residual, tol, detail=""):
        self.module = module
        self.contract = contract
        self.residual = residual
        self.tol = tol
        msg = f"[{module}] {contract}: residual {residual:.3e} > tol {tol:.1e}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NoConvergence(ContractViolation):
    pass


class ContinuityViolation(ContractViolation):
    pass


class ZeroPartition(ContractViolation):
    pass


class FitFailure(ContractViolation):
    pass


class DegenerateSteadyState(ContractViolation):
    pass


class GapCollapse(ContractViolation):
    pass


class StencilTooCoarse(ContractViolation):
    pass


class IllConditionedFit(ContractViolation):
    pass


class NoSolution(ContractViolation):
    pass


class BranchAmbiguity(ContractViolation):
    pass


class UnlabeledJump(ValidationError):
    pass

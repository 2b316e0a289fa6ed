"""Exception hierarchy. Each class carries a machine-readable ``code``."""


class InfoQMError(Exception):
    code = "error"


class ScenarioError(InfoQMError):
    """Invalid configuration; ``errors`` lists every problem found."""

    code = "validation"

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class GridError(ScenarioError):
    code = "grid"


class NumericalFailure(InfoQMError):
    code = "numerical"


class DensityFloorError(NumericalFailure):
    """Density dropped below the node floor.

    ``site`` is the multi-index of the first offending lattice site and
    ``time`` the simulation time of the breach, when known.
    """

    code = "density_floor"

    def __init__(self, message, site=None, time=None):
        self.site = site
        self.time = time
        super().__init__(message)


class NonConvergenceError(NumericalFailure):
    code = "non_convergence"

    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class AxiomError(InfoQMError):
    code = "axiom"


class CheckpointError(InfoQMError):
    code = "checkpoint"

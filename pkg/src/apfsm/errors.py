"""Exception hierarchy shared by the model, builder and analysis layers."""


class ModelError(Exception):
    """Base class for errors caused by an ill-formed or unsupported model."""

    code = "E-MODEL"


def _fmt_state(state):
    if state is None:
        return "?"
    if hasattr(state, "items"):
        return "{" + ", ".join(f"{k}={v}" for k, v in state.items()) + "}"
    return str(state)


class DomainViolation(ModelError):
    code = "E-DOMAIN"

    def __init__(self, variable, value, state=None):
        self.variable = variable
        self.value = value
        self.state = state
        msg = f"domain violation: {variable} would become {value}"
        if state is not None:
            msg += f" from state {_fmt_state(state)}"
        super().__init__(msg)


class WeightTie(ModelError):
    code = "E-TIE"

    def __init__(self, state, a, b, weight=None):
        self.state = state
        self.actions = (a, b)
        self.weight = weight
        super().__init__(
            f"weight tie between actions {a!r} and {b!r} (w={weight}) "
            f"in state {_fmt_state(state)}"
        )


class WeightRange(ModelError):
    code = "E-WEIGHT"

    def __init__(self, state, action, weight):
        self.state = state
        self.action = action
        self.weight = weight
        super().__init__(
            f"weight of {action!r} is {weight}, outside [0,1], in state {_fmt_state(state)}"
        )


class NoAction(ModelError):
    code = "E-NOACTION"

    def __init__(self, state):
        self.state = state
        super().__init__(f"no enabled action in state {_fmt_state(state)}")


class OverlappingCommands(ModelError):
    """Two commands carrying the same action label are enabled in one state."""

    code = "E-OVERLAP"

    def __init__(self, state, action):
        self.state = state
        self.action = action
        super().__init__(
            f"more than one command for action {action!r} enabled in state {_fmt_state(state)}"
        )


class CornerRequired(ModelError):
    code = "E-CORNER"

    def __init__(self, action, names, state=None):
        self.action = action
        self.names = tuple(names)
        self.state = state
        super().__init__(
            f"action {action!r} uses non-degenerate interval constants "
            f"{', '.join(self.names)}; an interval corner must be chosen "
            f"(use interval or uniform mode)"
            + (f" in state {_fmt_state(state)}" if state is not None else "")
        )


class StateBudgetExceeded(ModelError):
    code = "E-BUDGET"

    def __init__(self, limit, estimate=None):
        self.limit = limit
        self.estimate = estimate
        if estimate is None:
            msg = f"state budget of {limit} states exceeded"
        else:
            msg = f"estimated {estimate} states exceeds budget of {limit}"
        super().__init__(msg)


class UnlabeledTerminal(ModelError):
    code = "E-TERMINAL"

    def __init__(self, state):
        self.state = state
        super().__init__(f"absorbing state {_fmt_state(state)} matches no outcome label")


class MonotonicityViolation(ModelError):
    code = "E-MONOTONE"

    def __init__(self, variable, state, successor):
        self.variable = variable
        self.state = state
        self.successor = successor
        super().__init__(
            f"{variable} decreases along transition {_fmt_state(state)} -> {_fmt_state(successor)}"
        )


class RewardDivergence(ModelError):
    code = "E-DIVERGE"


class AnalysisError(Exception):
    """Numerical failure (as opposed to a model defect)."""


class NonConvergence(AnalysisError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"value iteration did not converge after {iterations} iterations "
            f"(residual {residual:.3e})"
        )

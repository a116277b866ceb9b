"""Exception types shared across the package."""


class MicrogridError(Exception):
    pass


class CplSaturated(MicrogridError, ValueError):
    """Bus voltage at or below the CPL cutoff, where the output derivatives
    used by the feedback-linearising controller are undefined."""


class IllConditionedDecoupling(MicrogridError, ArithmeticError):
    pass


class OutsideSafeSet(MicrogridError, ValueError):
    pass


class QpError(MicrogridError, ArithmeticError):
    pass


class QpInfeasible(QpError):
    pass


class QpIllConditioned(QpError):
    pass


class ConfigError(MicrogridError, ValueError):
    pass

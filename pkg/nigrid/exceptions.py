"""
Exception classes raised by nigrid.

Every concrete class also derives from the builtin it refines, so code that
catches ``ValueError`` or ``RuntimeError``-like builtins keeps working.
"""

__all__ = ['NIGridError', 'DimensionError', 'ConstructionError',
           'UnsupportedCheckError', 'InsufficientDataError', 'DivergenceError',
           'ScenarioError']


class NIGridError(Exception):
    """Base class for all nigrid errors"""
    pass


class DimensionError(NIGridError, ValueError):
    """Rejected input: wrong shape, wrong sign or an empty request"""
    pass


class ConstructionError(NIGridError, ValueError):
    """A system, topology or parameter set that cannot be built"""
    pass


class UnsupportedCheckError(NIGridError, TypeError):
    """The requested check needs data the system does not carry"""
    pass


class InsufficientDataError(NIGridError, ValueError):
    """Too few samples, or a trajectory missing recorded signals"""
    pass


class DivergenceError(NIGridError, ArithmeticError):
    """Integration produced a non-finite state"""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ScenarioError(NIGridError, ValueError):
    """
    Scenario file diagnostic

    Parameters
    ----------
    message : str
        human readable description
    field : str or None
        dotted path of the offending field, e.g. ``lines[1].X``
    line : int or None
        line number in the source file, when known

    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        self.detail = message
        where = []
        if line is not None:
            where.append(f'line {line}')
        if field is not None:
            where.append(field)
        if where:
            message = f'{", ".join(where)}: {message}'
        super().__init__(message)

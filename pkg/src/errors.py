from typing import Optional


class WireReconError(Exception):
    exit_code = 1

    def __init__(self, message: str, context: Optional[str]=None):
        self.context = context
        super().__init__(f'{context}: {message}' if context else message)


class InputError(WireReconError):
    exit_code = 2


class GeometryError(WireReconError):
    exit_code = 3


class NumericalError(WireReconError):
    exit_code = 4


class NonFiniteInput(InputError):
    pass


class DomainError(InputError):
    pass


class DeltaTooLarge(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class EmptySequence(InputError):
    pass


class LengthExceedsM(InputError):
    pass


class EmptyDataset(InputError):
    pass


class DegenerateAngle(InputError):
    pass


class ParseError(InputError):
    pass


class SchemaError(InputError):
    pass


class InvariantError(InputError):
    pass


class ConfigError(InputError):
    pass


class PointBehindCamera(GeometryError):
    pass


BehindCamera = PointBehindCamera


class ZeroVector(GeometryError):
    pass


class DegenerateCurve(GeometryError):
    pass


class RadiusTooLarge(GeometryError):
    pass


class EmptyCurve(GeometryError):
    pass


class EmptyPolyline(GeometryError):
    pass


class InsufficientPoints(GeometryError):
    pass


class RankDeficientNeighborhood(GeometryError):
    pass


class OutsideSupport(GeometryError):
    pass


class DegenerateConfiguration(GeometryError):
    pass


class NoConsensus(GeometryError):
    pass


class SingularLeftBlock(GeometryError):
    pass


class CoincidentCenters(GeometryError):
    pass


class NoOverlap(GeometryError):
    pass


class AmbiguousTopology(GeometryError):
    pass


class IllConditioned(GeometryError):
    pass


class OutOfBounds(GeometryError):
    pass


class DivergedError(NumericalError):
    pass


class NonFiniteLoss(NumericalError):
    pass

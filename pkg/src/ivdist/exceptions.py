"""Exception and warning types shared across the package."""


class IvdistError(Exception):
    """Base class for all library errors."""


# --- dataset ingestion / validation ---

class MissingColumnError(IvdistError):
    """A column named in the schema is absent from the input file."""


class NonBinaryColumnError(IvdistError):
    """Treatment-received or assignment column contains values outside {0, 1}."""


class NonFiniteValueError(IvdistError):
    """Outcome or covariate column contains NaN or infinite entries."""


class EmptyDatasetError(IvdistError):
    """The input file has a header but no data rows."""


class DegenerateOutcomeError(IvdistError):
    """The outcome is constant, so no threshold grid can be built."""


# --- randomization ---

class UnknownStratumError(IvdistError):
    """A stratum id has no target assignment probability."""


class InvalidBlockSizeError(IvdistError):
    """Block size is < 2 or block_size * target is not an integer."""


class LengthMismatchError(IvdistError):
    """Paired vectors (assignment vs. strata) differ in length."""


# --- nuisance fitting ---

class EmptyTrainingCellError(IvdistError):
    """Some (arm, stratum, fold-complement) training cell has no rows."""


class CellTooSmallError(IvdistError):
    """A (arm, stratum) cell has fewer units than the number of folds."""


class IndexOutOfRangeError(IvdistError):
    """Threshold index outside 1..J."""


# --- estimation / inference ---

class InvalidStrataError(IvdistError):
    """Some stratum has an empty assignment arm; the estimand is not computable."""


class WeakFirstStageError(IvdistError):
    """|first stage| fell below the configured floor; the effect is not identified."""


class InvalidLevelError(IvdistError):
    """Confidence level outside (0, 1)."""


class DegenerateBootstrapDrawError(IvdistError):
    """Too many bootstrap draws produced an empty (arm, stratum) cell."""


class NoCompliersError(IvdistError):
    """A generated reference sample contains no compliers."""


class LearnerDivergenceWarning(UserWarning):
    """A learner failed to converge; the cell fell back to its target mean."""

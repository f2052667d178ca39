"""Exception types shared across the marketplace."""


class VizError(Exception):
    """Base class for all marketplace errors."""


class InvalidBitWidthError(VizError):
    """Codebook bit-width below 2."""


class InvalidShapeError(VizError):
    """Matrix, adapter or stack shapes do not line up."""


class CorruptTensorError(VizError):
    """Quantized tensor fails its structural invariants."""


class CorruptBundleError(VizError):
    """Bundle payload does not match its declared hash or layout."""


class FitDivergedError(VizError):
    """Adapter fitting produced a non-finite loss."""


class InvalidManifestError(VizError):
    """License manifest is structurally invalid (e.g. no sources)."""


class PublicationRefusedError(VizError):
    """Publication blocked by license validation.

    Carries the offending source indices and their license ids.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        detail = ", ".join(f"source[{i}]={lic!r}" for i, lic in self.violations)
        super().__init__(f"license manifest refused: {detail}")


class RefuseAppendError(VizError):
    """Append attempted on a log that fails chain verification."""


class RefuseStartError(VizError):
    """Startup aborted because a persisted log fails verification."""


class NotFoundError(VizError):
    """Unknown model, adapter, listing, provider or account."""


class ConflictError(VizError):
    """Operation collides with existing state (e.g. duplicate adapter id)."""


class ForbiddenError(VizError):
    """Caller is not authorized for the operation."""


class GoneError(VizError):
    """Listing has been delisted."""


class PaymentRequiredError(VizError):
    """Request uses an adapter the account has no valid license for."""


class NotApplicableError(VizError):
    """Operation does not apply to this listing (e.g. price suggestion on a non-metered listing)."""


class TooEarlyError(VizError):
    """Billing period has not fully elapsed yet."""

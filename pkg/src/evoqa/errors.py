"""Exception hierarchy shared across the pipeline."""


class EvoQAError(Exception):
    """Base class for all pipeline errors."""


# --- ingest ---

class FileNotReadable(EvoQAError):
    pass


class NotUtf8(EvoQAError):
    pass


class EmptyDocument(EvoQAError):
    pass


class DocumentTooLarge(EvoQAError):
    pass


# --- rubric / scoring ---

class MissingMetric(EvoQAError):
    def __init__(self, metric_id):
        super().__init__(f"missing metric: {metric_id}")
        self.metric_id = metric_id


class UnknownMetric(EvoQAError):
    def __init__(self, metric_id):
        super().__init__(f"unknown metric: {metric_id}")
        self.metric_id = metric_id


class ScoreOutOfRange(EvoQAError):
    def __init__(self, metric_id, value):
        super().__init__(f"score out of range for {metric_id}: {value}")
        self.metric_id = metric_id
        self.value = value


class NonNumericScore(EvoQAError):
    def __init__(self, metric_id):
        super().__init__(f"non-numeric score for {metric_id}")
        self.metric_id = metric_id


class EmptyReportList(EvoQAError):
    pass


# --- protocol parsing ---

class NoStructuredBlock(EvoQAError):
    pass


class MalformedRecord(EvoQAError):
    pass


class WrongCount(EvoQAError):
    def __init__(self, got, expected):
        super().__init__(f"expected {expected} records, got {got}")
        self.got = got
        self.expected = expected


class DuplicatePair(EvoQAError):
    pass


# --- gateway ---

class TransportError(EvoQAError):
    pass


class AuthError(EvoQAError):
    pass


class RateLimited(EvoQAError):
    def __init__(self, message="rate limited", retry_after_ms=None):
        super().__init__(message)
        self.retry_after_ms = retry_after_ms


class NoScriptedResponse(EvoQAError):
    pass


class NoRecordedResponse(EvoQAError):
    pass


class BudgetExhausted(EvoQAError):
    pass


class RetriesExhausted(EvoQAError):
    def __init__(self, last_error):
        super().__init__(f"retries exhausted; last error: {last_error!r}")
        self.last_error = last_error


# --- engine ---

class EmptyPool(EvoQAError):
    pass


class SeedGenerationFailed(EvoQAError):
    pass


class EvaluationFailed(EvoQAError):
    pass


class LineageFailed(EvoQAError):
    pass


class RunFailed(EvoQAError):
    pass


# --- store ---

class StoreNotWritable(EvoQAError):
    pass


class CheckpointCorrupt(EvoQAError):
    pass


class ConfigMismatch(EvoQAError):
    pass

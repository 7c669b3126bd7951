"""Exception types shared across the toolkit."""


class QrwError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(QrwError, ValueError):
    """Bad input: configuration, arguments, or malformed files. CLI exit code 2."""


class FormatError(ValidationError):
    """A TREC/JSONL/snapshot file could not be parsed."""

    def __init__(self, message, path=None, line_no=None, line=None):
        self.path = path
        self.line_no = line_no
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line_no is not None:
            where += f":{line_no}"
        if line is not None:
            excerpt = line if len(line) <= 80 else line[:77] + "..."
            message = f"{message} (line {line_no}: {excerpt!r})"
        super().__init__(f"{where}: {message}" if where else message)


class DuplicateDocumentError(ValidationError):
    def __init__(self, doc_id):
        self.doc_id = doc_id
        super().__init__(f"duplicate doc_id {doc_id!r}")


class UnknownDocumentError(QrwError, KeyError):
    def __init__(self, doc_id):
        self.doc_id = doc_id
        super().__init__(f"unknown doc_id {doc_id!r}")

    def __str__(self):
        return self.args[0]


class GenerationError(QrwError, RuntimeError):
    """The text generator failed."""


class TransportError(GenerationError):
    def __init__(self, message, attempts):
        self.attempts = attempts
        super().__init__(f"{message} (after {attempts} attempts)")


class HTTPStatusError(GenerationError):
    def __init__(self, status, body, attempts=1):
        self.status = status
        self.body = body[:500]
        self.attempts = attempts
        super().__init__(f"generation endpoint returned HTTP {status}: {self.body}")


class EmptyReformulationError(QrwError, RuntimeError):
    def __init__(self, qid):
        self.qid = qid
        super().__init__(f"empty reformulation for query {qid!r}")


class FeedbackError(QrwError, RuntimeError):
    """No feedback documents could be selected for a query."""


class DegenerateSampleError(QrwError, ValueError):
    def __init__(self):
        super().__init__("degenerate paired sample: differences have zero variance but nonzero mean")

"""Exception hierarchy shared across the package."""


class EvoloopError(Exception):
    """Base class for all package errors."""


# --- problem / algorithm loading ---

class MissingDescription(EvoloopError):
    """The problem directory has no (or an empty) description file."""


class MissingEvaluator(EvoloopError):
    """The evaluator entry file named by the manifest does not exist."""


class MalformedManifest(EvoloopError):
    """The problem manifest is unreadable or violates an invariant."""


class EmptyCodebase(EvoloopError):
    """The initial algorithm directory contains no readable files."""


class UnreadableFile(EvoloopError):
    """A file in the algorithm tree could not be read as text."""

    def __init__(self, path, reason=""):
        self.path = str(path)
        super().__init__(f"unreadable file: {self.path}" + (f" ({reason})" if reason else ""))


class MalformedDescription(EvoloopError):
    """algorithm.md is missing required sections or has bad ratings."""


class EmptyProposal(EvoloopError):
    """A research proposal without pseudo-code cannot drive coding."""


# --- model gateway ---

class ModelError(EvoloopError):
    """A model/transport interaction failed."""


class TransportError(ModelError):
    """The live transport failed after exhausting retries."""


class FixtureMiss(ModelError):
    """Replay-strict lookup found no fixture for a request digest.

    Signals a drifted prompt: the run is generating requests that were
    never recorded.
    """

    def __init__(self, digest: str, kind: str = "chat"):
        self.digest = digest
        self.kind = kind
        super().__init__(f"no recorded {kind} fixture for digest {digest}")


class ParseError(EvoloopError):
    """A model response did not match the expected structured format."""


class EmptyIdeas(EvoloopError):
    """The writer returned a well-formed but empty idea list."""


# --- codebase serialization / diffs ---

class UnterminatedBlock(EvoloopError):
    """A serialized file block was opened but never closed."""


class DuplicatePath(EvoloopError):
    """Two serialized blocks (or a creation edit) name the same path."""


class SearchNotFound(EvoloopError):
    """A diff edit's search text does not occur in the target file."""

    def __init__(self, file: str, edit_index: int, detail: str = ""):
        self.file = file
        self.edit_index = edit_index
        msg = f"search text not found in {file!r} (edit {edit_index})"
        super().__init__(msg + (f": {detail}" if detail else ""))


# --- evolutionary database ---

class ScoreMissing(EvoloopError):
    """A program must carry a realized score before insertion."""


class EmptyDatabase(EvoloopError):
    """Sampling from a database with no programs."""


class CorruptCheckpoint(EvoloopError):
    """Checkpoint file is truncated or its integrity digest mismatches."""

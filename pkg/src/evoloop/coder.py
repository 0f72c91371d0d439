"""Multi-file codebase serialization and search/replace diff editing.

Codebases travel through prompts as delimited text blocks:

    === FILE: relative/path ===
    ...contents...
    === END FILE ===

Edits travel as ordered search/replace blocks:

    FILE: relative/path
    <<<<<<< SEARCH
    exact current text
    =======
    replacement text
    >>>>>>> REPLACE

An empty SEARCH section creates a new file. Search text is replaced at
its first occurrence only. Both formats round-trip losslessly; content
lines that collide with a delimiter are backslash-escaped.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Optional

from . import prompts
from .errors import (
    DuplicatePath,
    FixtureMiss,
    ModelError,
    ParseError,
    SearchNotFound,
    UnterminatedBlock,
)
from .gateway import ChatRequest, Gateway

logger = logging.getLogger(__name__)

FILE_OPEN_TEMPLATE = "=== FILE: {path} ==="
FILE_CLOSE = "=== END FILE ==="
DIFF_FILE_PREFIX = "FILE:"
SEARCH_MARKER = "<<<<<<< SEARCH"
DIVIDER_MARKER = "======="
REPLACE_MARKER = ">>>>>>> REPLACE"

_OPEN_RE = re.compile(r"^=== FILE: (.+) ===$")
_DELIM_RE = re.compile(r"^(\\*)(=== FILE: .+ ===|=== END FILE ===)$")


def _escape_line(line: str) -> str:
    m = _DELIM_RE.match(line)
    return "\\" + line if m else line


def _unescape_line(line: str) -> str:
    m = _DELIM_RE.match(line)
    if m and m.group(1):
        return line[1:]
    return line


def serialize(files: dict[str, str]) -> str:
    """Render a path -> content map as delimited blocks, in map order."""
    blocks = []
    for path, content in files.items():
        escaped = "\n".join(_escape_line(l) for l in content.split("\n"))
        blocks.append(f"{FILE_OPEN_TEMPLATE.format(path=path)}\n{escaped}\n{FILE_CLOSE}")
    return "\n".join(blocks) + ("\n" if blocks else "")


def parse(text: str) -> dict[str, str]:
    """Invert :func:`serialize`; text outside blocks is ignored.

    Raises :class:`UnterminatedBlock` for an unclosed (or nested) block
    and :class:`DuplicatePath` when two blocks name the same path.
    """
    files: dict[str, str] = {}
    current_path: Optional[str] = None
    current_lines: list[str] = []
    for line in text.split("\n"):
        opened = _OPEN_RE.match(line)
        if current_path is None:
            if opened:
                current_path = opened.group(1)
                current_lines = []
            continue
        if opened:
            raise UnterminatedBlock(
                f"block for {current_path!r} not closed before new block opens"
            )
        if line == FILE_CLOSE:
            if current_path in files:
                raise DuplicatePath(f"path {current_path!r} serialized twice")
            files[current_path] = "\n".join(_unescape_line(l) for l in current_lines)
            current_path = None
        else:
            current_lines.append(line)
    if current_path is not None:
        raise UnterminatedBlock(f"block for {current_path!r} has no closing delimiter")
    return files


@dataclass(frozen=True)
class DiffEdit:
    file: str
    search: str
    replace: str

    @property
    def is_creation(self) -> bool:
        return self.search == ""


@dataclass(frozen=True)
class DiffSet:
    edits: tuple[DiffEdit, ...] = ()

    def __bool__(self) -> bool:
        return bool(self.edits)


@dataclass
class DebugReport:
    """One corrective attempt: which try, what it saw, what it changed."""

    attempt: int
    error_excerpt: str
    applied_fix: DiffSet


#: Diagnostics shown to the debugger are capped to this many trailing chars.
ERROR_EXCERPT_CHARS = 4000


def parse_diffs(text: str) -> DiffSet:
    """Parse FILE/SEARCH/REPLACE blocks out of a model reply.

    Anything outside the edit blocks (prose, code fences) is ignored, so
    replies may wrap or annotate their edits. Raises
    :class:`ParseError` when markers are malformed or unbalanced.
    """
    edits: list[DiffEdit] = []
    lines = text.split("\n")
    i = 0
    while i < len(lines):
        line = lines[i]
        if not line.startswith(DIFF_FILE_PREFIX):
            i += 1
            continue
        path = line[len(DIFF_FILE_PREFIX):].strip()
        if not path:
            raise ParseError(f"FILE marker without a path at line {i + 1}")
        i += 1
        while i < len(lines) and not lines[i].strip():
            i += 1
        if i >= len(lines) or lines[i] != SEARCH_MARKER:
            raise ParseError(f"expected {SEARCH_MARKER!r} after FILE {path!r}")
        i += 1
        search_lines: list[str] = []
        while i < len(lines) and lines[i] != DIVIDER_MARKER:
            if lines[i] == REPLACE_MARKER or lines[i].startswith(DIFF_FILE_PREFIX):
                raise ParseError(f"edit for {path!r} has no divider before {lines[i]!r}")
            search_lines.append(lines[i])
            i += 1
        if i >= len(lines):
            raise ParseError(f"edit for {path!r} missing divider marker")
        i += 1
        replace_lines: list[str] = []
        while i < len(lines) and lines[i] != REPLACE_MARKER:
            if lines[i] == SEARCH_MARKER:
                raise ParseError(f"edit for {path!r} missing {REPLACE_MARKER!r}")
            replace_lines.append(lines[i])
            i += 1
        if i >= len(lines):
            raise ParseError(f"edit for {path!r} missing {REPLACE_MARKER!r}")
        i += 1
        edits.append(DiffEdit(
            file=path,
            search="\n".join(search_lines),
            replace="\n".join(replace_lines),
        ))
    return DiffSet(tuple(edits))


def apply_diff(files: dict[str, str], diff: DiffSet) -> dict[str, str]:
    """Apply edits in order; returns a new map, inputs untouched.

    Each search is replaced at its first occurrence only (a multiplicity
    warning is logged for ambiguous searches). Creation edits add new
    files and collide on existing paths.
    """
    result = dict(files)
    for index, edit in enumerate(diff.edits):
        if edit.is_creation:
            if edit.file in result:
                raise DuplicatePath(
                    f"edit {index} creates {edit.file!r} which already exists"
                )
            result[edit.file] = edit.replace
            continue
        if edit.file not in result:
            raise SearchNotFound(edit.file, index, "file does not exist")
        content = result[edit.file]
        at = content.find(edit.search)
        if at < 0:
            raise SearchNotFound(edit.file, index)
        if content.count(edit.search) > 1:
            logger.warning("ambiguous search in %s (edit %d): replacing first of %d",
                           edit.file, index, content.count(edit.search))
        result[edit.file] = content[:at] + edit.replace + content[at + len(edit.search):]
    return result


def _validate_against(files: dict[str, str], diff: DiffSet) -> None:
    for index, edit in enumerate(diff.edits):
        if not edit.is_creation and edit.file not in files:
            raise ParseError(
                f"edit {index} targets unknown file {edit.file!r}"
            )


def _request_diff(gateway: Gateway, role: str, system: str, user: str,
                  files: dict[str, str], *, allow_empty: bool,
                  reasks: int = 1) -> DiffSet:
    """Chat for a DiffSet, re-asking once on a malformed reply."""
    last_error: Optional[ParseError] = None
    request = ChatRequest(role=role, system=system, user=user)
    for attempt in range(reasks + 1):
        response = gateway.chat(request)
        text = response.text
        if allow_empty and (not text.strip() or "NO CHANGES" in text):
            return DiffSet()
        try:
            diff = parse_diffs(text)
            if not diff.edits and not allow_empty:
                raise ParseError("reply contains no edits")
            _validate_against(files, diff)
            return diff
        except ParseError as exc:
            last_error = exc
            logger.warning("%s reply malformed (attempt %d): %s", role, attempt + 1, exc)
            request = ChatRequest(
                role=role,
                system=system,
                user=user + f"\n\nYour previous reply could not be parsed "
                            f"({exc}). Reply again using the exact edit format.",
            )
    raise last_error


def propose_diff(gateway: Gateway, ctx, files: dict[str, str]) -> DiffSet:
    """Ask the coding model for the edits implementing a proposal.

    ``ctx`` comes from :func:`evoloop.context.render_coding_context`.
    """
    return _request_diff(gateway, "coder", ctx.system, ctx.user, files,
                         allow_empty=False)


def self_reflect(gateway: Gateway, files: dict[str, str], proposal) -> DiffSet:
    """One review pass of freshly patched code against the proposal.

    Returns corrective edits or an empty set. Gateway or parse failures
    skip reflection (logged) rather than failing the iteration.
    """
    idea = proposal.chosen_idea()
    user = prompts.REFLECTION_USER_TEMPLATE.format(
        serialized_codebase=serialize(files),
        title=idea.title,
        pseudo_code=idea.pseudo_code,
    )
    try:
        return _request_diff(gateway, "coder", prompts.CODE_REFLECTION_SYSTEM, user,
                             files, allow_empty=True)
    except FixtureMiss:
        raise
    except (ParseError, ModelError) as exc:
        logger.warning("self-reflection skipped: %s", exc)
        return DiffSet()


def debug_once(gateway: Gateway, files: dict[str, str], error_excerpt: str,
               attempt: int, budget: int) -> DiffSet:
    """Ask the debugging model for a corrective diff.

    ``attempt`` is zero-based and must be below ``budget``. An empty
    excerpt is valid (timeouts produce no diagnostics).
    """
    if attempt >= budget:
        raise ValueError(f"debug attempt {attempt} outside budget {budget}")
    user = prompts.DEBUG_USER_TEMPLATE.format(
        serialized_codebase=serialize(files),
        attempt=attempt + 1,
        budget=budget,
        error_excerpt=error_excerpt[-ERROR_EXCERPT_CHARS:] or "(no diagnostics captured)",
    )
    return _request_diff(gateway, "debugger", prompts.DEBUGGER_SYSTEM, user, files,
                         allow_empty=False)

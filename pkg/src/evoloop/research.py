"""Research pipeline: plan questions, search, reflect, write a proposal.

Each stage chats through the gateway and parses a fenced, schema-tagged
block out of the reply (```questions / ```decision / ```ideas). Every
parser re-asks once before raising :class:`~evoloop.errors.ParseError`.
The pipeline is bounded: at most ``max_reflections`` reflection rounds,
after which writing is forced.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from . import prompts
from .context import PromptBundle
from .errors import EmptyIdeas, FixtureMiss, ParseError, TransportError
from .gateway import ChatRequest, Gateway

logger = logging.getLogger(__name__)

NO_EVIDENCE_MARKER = "no evidence found"


@dataclass(frozen=True)
class ResearchConfig:
    max_questions: int = 5
    max_reflections: int = 3
    #: Lineages revised at least this many times get the exploratory directive.
    exploration_threshold: int = 3
    #: Progress fraction at which idea selection flips from feasibility- to
    #: impact-weighted.
    stage_threshold: float = 0.5
    early_weights: tuple[float, float] = (0.7, 0.3)  # (feasibility, impact)
    late_weights: tuple[float, float] = (0.3, 0.7)


@dataclass(frozen=True)
class ResearchQuestion:
    text: str
    exploratory: bool = False

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("research question must be non-empty")


@dataclass(frozen=True)
class EvidenceSummary:
    question: ResearchQuestion
    summary: str
    sources: tuple[str, ...] = ()


def _clamp_rating(value, name: str) -> float:
    try:
        rating = float(value)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"idea rating {name!r} is not numeric: {value!r}") from exc
    if not 0 <= rating <= 10:
        logger.warning("idea rating %s=%s outside [0, 10], clamping", name, rating)
        rating = min(10.0, max(0.0, rating))
    return rating


@dataclass(frozen=True)
class IdeaCandidate:
    title: str
    description: str
    pseudo_code: str
    originality: float
    future_potential: float
    difficulty: float
    refinement: bool = False


@dataclass(frozen=True)
class ResearchProposal:
    questions: tuple[ResearchQuestion, ...]
    evidence: tuple[EvidenceSummary, ...]
    ideas: tuple[IdeaCandidate, ...]
    chosen: int
    report: str

    def __post_init__(self):
        if not self.ideas:
            raise EmptyIdeas("a proposal needs at least one idea")
        if not 0 <= self.chosen < len(self.ideas):
            raise ValueError(f"chosen index {self.chosen} out of range")
        if self.ideas[self.chosen].pseudo_code not in self.report:
            raise ValueError("report must contain the chosen idea's pseudo-code")

    def chosen_idea(self) -> IdeaCandidate:
        return self.ideas[self.chosen]


class ReflectionAction(Enum):
    MORE_PLANNING = "MorePlanning"
    MORE_SEARCH = "MoreSearch"
    WRITE = "Write"


@dataclass(frozen=True)
class ReflectionDecision:
    action: ReflectionAction


def _extract_block(text: str, tag: str) -> str:
    """Pull the body of a fenced block tagged ``tag`` out of a reply."""
    match = re.search(rf"```{tag}\s*\n(.*?)```", text, re.DOTALL)
    if not match:
        raise ParseError(f"reply contains no ```{tag} block")
    return match.group(1)


def _chat_with_reask(gateway: Gateway, role: str, system: str, user: str,
                     parser, what: str):
    """Chat and parse; on a malformed reply, re-ask once with the error."""
    request = ChatRequest(role=role, system=system, user=user)
    last_error: Optional[ParseError] = None
    for attempt in range(2):
        response = gateway.chat(request)
        try:
            return parser(response.text)
        except ParseError as exc:
            last_error = exc
            logger.warning("%s reply malformed (attempt %d): %s", what, attempt + 1, exc)
            request = ChatRequest(
                role=role, system=system,
                user=user + f"\n\nYour previous reply could not be parsed ({exc}). "
                            f"Reply again with a valid ```{what} block.",
            )
    raise last_error


def plan(gateway: Gateway, ctx: PromptBundle, update_count: int,
         config: ResearchConfig = ResearchConfig()) -> list[ResearchQuestion]:
    """Generate 1..max_questions research questions from the context.

    Lineages past the exploration threshold get the exploratory directive
    and their questions come back flagged exploratory.
    """
    exploratory = update_count >= config.exploration_threshold
    system = ctx.system + "\n\n" + prompts.PLANNER_SYSTEM.format(
        max_questions=config.max_questions
    )
    user = ctx.user + prompts.PLAN_USER_SUFFIX
    if exploratory:
        user += "\n\n" + prompts.PLANNER_EXPLORATORY_DIRECTIVE

    def parse_questions(text: str) -> list[ResearchQuestion]:
        body = _extract_block(text, "questions")
        try:
            raw = json.loads(body)
        except json.JSONDecodeError as exc:
            raise ParseError(f"questions block is not valid JSON: {exc}") from exc
        if not isinstance(raw, list) or not raw:
            raise ParseError("questions block must be a non-empty JSON array")
        texts = [str(q).strip() for q in raw if str(q).strip()]
        if not texts:
            raise ParseError("questions block contains no usable questions")
        return [ResearchQuestion(t, exploratory=exploratory)
                for t in texts[:config.max_questions]]

    return _chat_with_reask(gateway, "planner", system, user, parse_questions,
                            "questions")


def search(gateway: Gateway, question: ResearchQuestion) -> EvidenceSummary:
    """Search the web for a question and summarize the results.

    A provider outage (live transport failure) degrades to an explicit
    empty-evidence summary; replay-strict misses propagate.
    """
    try:
        results = gateway.web_search(question.text)
    except FixtureMiss:
        raise
    except TransportError as exc:
        logger.warning("search provider outage for %r: %s", question.text, exc)
        return EvidenceSummary(question, NO_EVIDENCE_MARKER, ())

    if not results:
        return EvidenceSummary(question, NO_EVIDENCE_MARKER, ())

    rendered = "\n".join(
        f"- [{r.identifier}] {r.title}: {r.snippet}" for r in results
    )
    user = prompts.SEARCH_SUMMARY_USER_TEMPLATE.format(
        question=question.text, results=rendered
    )
    try:
        response = gateway.chat(ChatRequest(
            role="searcher", system=prompts.SEARCH_SUMMARY_SYSTEM, user=user
        ))
        summary = response.text.strip()
    except FixtureMiss:
        raise
    except TransportError as exc:
        logger.warning("search summarizer outage for %r: %s", question.text, exc)
        summary = ""
    if not summary:
        summary = "Results retrieved but not summarized:\n" + rendered
    return EvidenceSummary(question, summary,
                           tuple(r.identifier for r in results if r.identifier))


def reflect(gateway: Gateway, questions: list[ResearchQuestion],
            evidence: list[EvidenceSummary], reflections_used: int,
            max_reflections: int) -> ReflectionDecision:
    """Decide whether to keep planning, keep searching, or write.

    At the reflection cap the decision is Write, unconditionally and
    without a model call. An unparseable reply (after one re-ask) falls
    back to Write.
    """
    if reflections_used > max_reflections:
        raise ValueError(f"reflections_used {reflections_used} exceeds cap {max_reflections}")
    if reflections_used == max_reflections:
        return ReflectionDecision(ReflectionAction.WRITE)

    question_text = "\n".join(f"- {q.text}" for q in questions)
    evidence_text = "\n\n".join(
        f"Q: {e.question.text}\nSources: {', '.join(e.sources) or 'none'}\n{e.summary}"
        for e in evidence
    ) or "(no evidence gathered yet)"
    user = prompts.REFLECT_USER_TEMPLATE.format(
        questions=question_text,
        evidence=evidence_text,
        reflections_used=reflections_used,
        max_reflections=max_reflections,
    )

    def parse_decision(text: str) -> ReflectionDecision:
        body = _extract_block(text, "decision").strip()
        for action in ReflectionAction:
            if body.lower() == action.value.lower():
                return ReflectionDecision(action)
        raise ParseError(f"decision block must be one of "
                         f"{[a.value for a in ReflectionAction]}, got {body!r}")

    try:
        return _chat_with_reask(gateway, "reflector", prompts.REFLECTOR_SYSTEM, user,
                                parse_decision, "decision")
    except ParseError as exc:
        logger.warning("reflection unparseable twice, falling back to Write: %s", exc)
        return ReflectionDecision(ReflectionAction.WRITE)


def choose_idea(ideas: list[IdeaCandidate], progress: float,
                config: ResearchConfig = ResearchConfig()) -> int:
    """Stage-weighted argmax over ideas; pure function of its inputs.

    Score = w_f * (10 - difficulty) + w_i * future_potential, with the
    early weights before the stage threshold and the late weights after.
    Ties break on higher originality, then lower index.
    """
    w_f, w_i = (config.early_weights if progress < config.stage_threshold
                else config.late_weights)
    best_index = 0
    best_key = (-math.inf, -math.inf)
    for index, idea in enumerate(ideas):
        key = (w_f * (10 - idea.difficulty) + w_i * idea.future_potential,
               idea.originality)
        if key > best_key:
            best_key = key
            best_index = index
    return best_index


def write(gateway: Gateway, ctx: PromptBundle, evidence: list[EvidenceSummary],
          progress: float,
          config: ResearchConfig = ResearchConfig(),
          questions: Optional[list[ResearchQuestion]] = None) -> ResearchProposal:
    """Compose the improvement proposal from context and evidence.

    The evidence list may be empty (knowledge-only fallback after a
    search outage).
    """
    evidence_text = "\n\n".join(
        f"Q: {e.question.text}\nSources: {', '.join(e.sources) or 'none'}\n{e.summary}"
        for e in evidence
    ) or "(no external evidence; rely on established knowledge)"
    system = ctx.system + "\n\n" + prompts.WRITER_SYSTEM
    user = ctx.user + prompts.WRITE_USER_SUFFIX.format(evidence=evidence_text)

    def parse_ideas(text: str) -> list[IdeaCandidate]:
        body = _extract_block(text, "ideas")
        try:
            raw = json.loads(body)
        except json.JSONDecodeError as exc:
            raise ParseError(f"ideas block is not valid JSON: {exc}") from exc
        if not isinstance(raw, list):
            raise ParseError("ideas block must be a JSON array")
        ideas = []
        for i, item in enumerate(raw):
            if not isinstance(item, dict):
                raise ParseError(f"idea {i} is not an object")
            try:
                ideas.append(IdeaCandidate(
                    title=str(item["title"]).strip(),
                    description=str(item.get("description", "")).strip(),
                    pseudo_code=str(item.get("pseudo_code", "")),
                    originality=_clamp_rating(item.get("originality", 5), "originality"),
                    future_potential=_clamp_rating(
                        item.get("future_potential", 5), "future_potential"),
                    difficulty=_clamp_rating(item.get("difficulty", 5), "difficulty"),
                    refinement=bool(item.get("refinement", False)),
                ))
            except KeyError as exc:
                raise ParseError(f"idea {i} is missing field {exc}") from exc
        return ideas

    ideas = _chat_with_reask(gateway, "writer", system, user, parse_ideas, "ideas")
    if not ideas:
        raise EmptyIdeas("writer returned an empty idea array")

    chosen = choose_idea(ideas, progress, config)
    idea = ideas[chosen]
    report = (
        f"# Proposal: {idea.title}\n\n"
        f"{idea.description}\n\n"
        f"## Pseudo-code\n\n{idea.pseudo_code}\n\n"
        f"## Self-assessment\n\n"
        f"Originality {idea.originality:g} | future potential "
        f"{idea.future_potential:g} | difficulty {idea.difficulty:g} | "
        f"{'refines the current idea' if idea.refinement else 'new idea'}\n"
    )
    return ResearchProposal(
        questions=tuple(questions or ()),
        evidence=tuple(evidence),
        ideas=tuple(ideas),
        chosen=chosen,
        report=report,
    )


def run_research(gateway: Gateway, ctx: PromptBundle, update_count: int,
                 progress: float,
                 config: ResearchConfig = ResearchConfig()) -> ResearchProposal:
    """Full pipeline: plan, search each question, reflect (bounded), write."""
    questions = plan(gateway, ctx, update_count, config)
    evidence = [search(gateway, q) for q in questions]

    for reflections_used in range(config.max_reflections + 1):
        decision = reflect(gateway, questions, evidence, reflections_used,
                           config.max_reflections)
        if decision.action is ReflectionAction.WRITE:
            break
        if decision.action is ReflectionAction.MORE_PLANNING:
            known = {q.text for q in questions}
            fresh = [q for q in plan(gateway, ctx, update_count, config)
                     if q.text not in known]
            questions.extend(fresh)
            evidence.extend(search(gateway, q) for q in fresh)
        elif decision.action is ReflectionAction.MORE_SEARCH:
            thin: dict[str, ResearchQuestion] = {
                e.question.text: e.question for e in evidence
                if e.summary == NO_EVIDENCE_MARKER
            }
            targets = list(thin.values()) or [questions[-1]]
            evidence.extend(search(gateway, q) for q in targets)

    return write(gateway, ctx, evidence, progress, config, questions=questions)

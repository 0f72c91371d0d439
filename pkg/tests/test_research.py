"""Research pipeline: planning, searching, reflection, proposal writing."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import (
    QueueGateway,
    make_program,
    replay_gateway,
    write_chat_fixture,
    write_search_fixture,
)
from evoloop import prompts
from evoloop.context import UserInstructions, render_research_context
from evoloop.errors import EmptyIdeas, FixtureMiss, ParseError, TransportError
from evoloop.gateway import ChatRequest, RoleRouting, SearchResult
from evoloop.research import (
    NO_EVIDENCE_MARKER,
    EvidenceSummary,
    IdeaCandidate,
    ReflectionAction,
    ResearchConfig,
    ResearchQuestion,
    choose_idea,
    plan,
    reflect,
    run_research,
    search,
    write,
)
from test_context import make_problem

ROUTING = RoleRouting()


def research_ctx(progress=0.2, score=1.0):
    return render_research_context(
        make_problem(), make_program("cand", score=score), [],
        UserInstructions("keep it cheap"), progress)


def questions_block(questions) -> str:
    return "```questions\n" + json.dumps(questions) + "\n```"


def ideas_block(ideas) -> str:
    return "```ideas\n" + json.dumps(ideas) + "\n```"


IDEA = {
    "title": "warm starts",
    "description": "reuse the previous solution as the starting point",
    "pseudo_code": "1. load prior solution\n2. polish",
    "originality": 4,
    "future_potential": 6,
    "difficulty": 2,
    "refinement": True,
}


class TestPlan:
    def test_plan_basic_replay_fixture(self, tmp_path):
        # Recorded fixture built before exercising the implementation.
        ctx = research_ctx()
        request = ChatRequest(
            role="planner",
            system=ctx.system + "\n\n" + prompts.PLANNER_SYSTEM.format(max_questions=5),
            user=ctx.user + prompts.PLAN_USER_SUFFIX,
        )
        write_chat_fixture(
            tmp_path, request, ROUTING.model_for("planner"),
            questions_block(["What bounds apply?",
                             "Which solvers scale?",
                             "What initialization helps?"]),
        )
        gateway = replay_gateway(tmp_path)
        result = plan(gateway, ctx, update_count=0)
        assert [q.text for q in result] == [
            "What bounds apply?", "Which solvers scale?", "What initialization helps?"]
        assert not any(q.exploratory for q in result)

    def test_exploratory_directive_at_high_update_count(self):
        ctx = research_ctx()
        gateway = QueueGateway(chat_replies=[questions_block(["q1"])])
        result = plan(gateway, ctx, update_count=5)
        # String-inspection oracle on the rendered prompt.
        assert prompts.PLANNER_EXPLORATORY_DIRECTIVE in gateway.chat_requests[0].user
        assert all(q.exploratory for q in result)

    def test_no_directive_below_threshold(self):
        ctx = research_ctx()
        gateway = QueueGateway(chat_replies=[questions_block(["q1"])])
        result = plan(gateway, ctx, update_count=2)
        assert prompts.PLANNER_EXPLORATORY_DIRECTIVE not in gateway.chat_requests[0].user
        assert not result[0].exploratory

    def test_empty_reply_twice_is_parse_error(self):
        ctx = research_ctx()
        gateway = QueueGateway(chat_replies=["", ""])
        with pytest.raises(ParseError):
            plan(gateway, ctx, update_count=0)
        assert len(gateway.chat_requests) == 2

    def test_question_cap_applied(self):
        ctx = research_ctx()
        gateway = QueueGateway(
            chat_replies=[questions_block([f"q{i}" for i in range(9)])])
        result = plan(gateway, ctx, update_count=0)
        assert len(result) == 5


class TestSearch:
    def test_replay_fixture_with_two_sources(self, tmp_path):
        question = ResearchQuestion("What bounds apply?")
        write_search_fixture(tmp_path, question.text, ROUTING.model_for("searcher"), [
            {"title": "Bounds I", "id": "arxiv:0001", "snippet": "tight bounds"},
            {"title": "Bounds II", "id": "doi:10.1/x", "snippet": "looser bounds"},
        ])
        rendered = "\n".join([
            "- [arxiv:0001] Bounds I: tight bounds",
            "- [doi:10.1/x] Bounds II: looser bounds",
        ])
        summary_request = ChatRequest(
            role="searcher",
            system=prompts.SEARCH_SUMMARY_SYSTEM,
            user=prompts.SEARCH_SUMMARY_USER_TEMPLATE.format(
                question=question.text, results=rendered),
        )
        write_chat_fixture(tmp_path, summary_request, ROUTING.model_for("searcher"),
                           "Both results give usable bounds.")
        gateway = replay_gateway(tmp_path)
        evidence = search(gateway, question)
        assert evidence.sources == ("arxiv:0001", "doi:10.1/x")
        assert "usable bounds" in evidence.summary

    def test_zero_results_marks_no_evidence(self):
        gateway = QueueGateway(search_replies=[[]])
        evidence = search(gateway, ResearchQuestion("anything?"))
        assert evidence.summary == NO_EVIDENCE_MARKER
        assert evidence.sources == ()

    def test_provider_outage_degrades(self):
        gateway = QueueGateway(search_replies=[TransportError("down")])
        evidence = search(gateway, ResearchQuestion("anything?"))
        assert evidence.summary == NO_EVIDENCE_MARKER

    def test_replay_strict_miss_propagates(self, tmp_path):
        gateway = replay_gateway(tmp_path)
        with pytest.raises(FixtureMiss):
            search(gateway, ResearchQuestion("never recorded"))


def decision_block(token: str) -> str:
    return f"```decision\n{token}\n```"


class TestReflect:
    def test_forced_write_at_cap_without_model_call(self):
        gateway = QueueGateway()  # any chat would fail the test
        decision = reflect(gateway, [], [], reflections_used=3, max_reflections=3)
        assert decision.action is ReflectionAction.WRITE
        assert gateway.chat_requests == []

    def test_more_search_replay_fixture(self, tmp_path):
        question = ResearchQuestion("q1")
        evidence = EvidenceSummary(question, NO_EVIDENCE_MARKER, ())
        user = prompts.REFLECT_USER_TEMPLATE.format(
            questions="- q1",
            evidence=f"Q: q1\nSources: none\n{NO_EVIDENCE_MARKER}",
            reflections_used=0, max_reflections=3)
        request = ChatRequest(role="reflector", system=prompts.REFLECTOR_SYSTEM,
                              user=user)
        write_chat_fixture(tmp_path, request, ROUTING.model_for("reflector"),
                           decision_block("MoreSearch"))
        gateway = replay_gateway(tmp_path)
        decision = reflect(gateway, [question], [evidence], 0, 3)
        assert decision.action is ReflectionAction.MORE_SEARCH

    def test_unparseable_twice_falls_back_to_write(self):
        gateway = QueueGateway(chat_replies=["??", "??"])
        decision = reflect(gateway, [ResearchQuestion("q")], [], 0, 3)
        assert decision.action is ReflectionAction.WRITE
        assert len(gateway.chat_requests) == 2


class TestChooseIdea:
    def test_early_stage_prefers_feasible(self):
        ideas = [
            IdeaCandidate("easy", "", "pc", originality=5, future_potential=5, difficulty=2),
            IdeaCandidate("hard", "", "pc", originality=5, future_potential=9, difficulty=9),
        ]
        # Hand computation: 0.7*8 + 0.3*5 = 7.1 > 0.7*1 + 0.3*9 = 3.4
        assert choose_idea(ideas, progress=0.1) == 0

    def test_late_stage_prefers_impact(self):
        ideas = [
            IdeaCandidate("easy", "", "pc", originality=5, future_potential=5, difficulty=2),
            IdeaCandidate("hard", "", "pc", originality=5, future_potential=9, difficulty=9),
        ]
        # Hand computation: 0.3*8 + 0.7*5 = 5.9 < 0.3*1 + 0.7*9 = 6.6
        assert choose_idea(ideas, progress=0.9) == 1

    def test_single_idea_forced(self):
        only = [IdeaCandidate("one", "", "pc", 5, 5, 5)]
        assert choose_idea(only, progress=0.5) == 0

    def test_tie_broken_by_originality_then_index(self):
        tied = [
            IdeaCandidate("a", "", "pc", originality=3, future_potential=5, difficulty=5),
            IdeaCandidate("b", "", "pc", originality=8, future_potential=5, difficulty=5),
            IdeaCandidate("c", "", "pc", originality=8, future_potential=5, difficulty=5),
        ]
        assert choose_idea(tied, progress=0.2) == 1

    def test_pure_function(self):
        ideas = [IdeaCandidate("a", "", "pc", 1, 9, 4),
                 IdeaCandidate("b", "", "pc", 7, 3, 6)]
        picks = {choose_idea(ideas, 0.33) for _ in range(10)}
        assert len(picks) == 1

    @settings(max_examples=200, deadline=None)
    @given(st.lists(
        st.tuples(st.integers(0, 10), st.integers(0, 10), st.integers(0, 10)),
        min_size=1, max_size=6,
    ))
    def test_stage_shift_is_monotone_at_argmax(self, ratings):
        ideas = [IdeaCandidate(f"i{k}", "", "pc", originality=o,
                               future_potential=p, difficulty=d)
                 for k, (o, p, d) in enumerate(ratings)]
        early = ideas[choose_idea(ideas, progress=0.0)]
        late = ideas[choose_idea(ideas, progress=1.0)]
        # The early argmax is never strictly harder AND strictly less
        # promising than the late argmax.
        assert not (early.difficulty > late.difficulty
                    and early.future_potential < late.future_potential)


class TestWrite:
    def test_two_ideas_weighted_choice(self):
        ctx = research_ctx(progress=0.1)
        ideas = [dict(IDEA, title="easy", difficulty=2, future_potential=5,
                      refinement=False),
                 dict(IDEA, title="hard", difficulty=9, future_potential=9)]
        gateway = QueueGateway(chat_replies=[ideas_block(ideas)])
        proposal = write(gateway, ctx, [], progress=0.1)
        assert proposal.chosen_idea().title == "easy"
        assert proposal.chosen_idea().pseudo_code in proposal.report

    def test_same_ideas_late_progress_flips_choice(self):
        ctx = research_ctx(progress=0.9)
        ideas = [dict(IDEA, title="easy", difficulty=2, future_potential=5),
                 dict(IDEA, title="hard", difficulty=9, future_potential=9)]
        gateway = QueueGateway(chat_replies=[ideas_block(ideas)])
        proposal = write(gateway, ctx, [], progress=0.9)
        assert proposal.chosen_idea().title == "hard"

    def test_single_idea_chosen_zero(self):
        gateway = QueueGateway(chat_replies=[ideas_block([IDEA])])
        proposal = write(gateway, research_ctx(), [], progress=0.5)
        assert proposal.chosen == 0

    def test_empty_array_is_empty_ideas(self):
        gateway = QueueGateway(chat_replies=[ideas_block([])])
        with pytest.raises(EmptyIdeas):
            write(gateway, research_ctx(), [], progress=0.5)

    def test_out_of_range_rating_clamped(self):
        bad = dict(IDEA, originality=37)
        gateway = QueueGateway(chat_replies=[ideas_block([bad])])
        proposal = write(gateway, research_ctx(), [], progress=0.5)
        assert proposal.chosen_idea().originality == 10.0

    def test_evidence_embedded_in_prompt(self):
        evidence = [EvidenceSummary(ResearchQuestion("q"), "crucial insight",
                                    ("arxiv:7",))]
        gateway = QueueGateway(chat_replies=[ideas_block([IDEA])])
        write(gateway, research_ctx(), evidence, progress=0.5)
        assert "crucial insight" in gateway.chat_requests[0].user
        assert "arxiv:7" in gateway.chat_requests[0].user


class TestPipeline:
    def test_straight_through_run(self):
        gateway = QueueGateway(
            chat_replies=[
                questions_block(["q1", "q2"]),
                "summary for q1",
                "summary for q2",
                decision_block("Write"),
                ideas_block([IDEA]),
            ],
            search_replies=[
                [SearchResult("t1", "s1", "sn1")],
                [SearchResult("t2", "s2", "sn2")],
            ],
        )
        proposal = run_research(gateway, research_ctx(), update_count=0, progress=0.2)
        assert proposal.chosen_idea().title == "warm starts"
        assert len(proposal.evidence) == 2
        assert len(proposal.questions) == 2

    def test_more_search_then_write(self):
        gateway = QueueGateway(
            chat_replies=[
                questions_block(["q1"]),
                decision_block("MoreSearch"),   # evidence was empty
                "late summary",
                decision_block("Write"),
                ideas_block([IDEA]),
            ],
            search_replies=[
                [],                              # first search: nothing
                [SearchResult("t", "s", "sn")],  # re-search succeeds
            ],
        )
        proposal = run_research(gateway, research_ctx(), update_count=0, progress=0.2)
        assert len(proposal.evidence) == 2
        assert proposal.evidence[1].summary == "late summary"

    def test_terminates_within_reflection_cap(self):
        config = ResearchConfig(max_reflections=2)
        gateway = QueueGateway(
            chat_replies=[
                questions_block(["q1"]),
                decision_block("MoreSearch"),
                decision_block("MoreSearch"),
                # cap reached: write is forced without another reflection call
                ideas_block([IDEA]),
            ],
            search_replies=[[], [], []],
        )
        proposal = run_research(gateway, research_ctx(), update_count=0,
                                progress=0.2, config=config)
        assert proposal.chosen == 0
        assert gateway.chat_replies == []  # every scripted reply consumed

    def test_more_planning_extends_questions(self):
        gateway = QueueGateway(
            chat_replies=[
                questions_block(["q1"]),
                decision_block("MorePlanning"),
                questions_block(["q1", "q2"]),  # q1 already known
                decision_block("Write"),
                ideas_block([IDEA]),
            ],
            search_replies=[[], []],
        )
        proposal = run_research(gateway, research_ctx(), update_count=0, progress=0.2)
        assert [q.text for q in proposal.questions] == ["q1", "q2"]

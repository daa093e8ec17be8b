"""Decision-scenario trees and their exact evaluation by backward induction.

A tree alternates decision layers (max) and chance layers (expectation)
above leaves that carry a success indicator.  Evaluating the root of a tree
whose final decision is taken after every random element has realized gives
the perfect-reoptimization upper bound on success probability; committing
to one schedule up front and letting chance nodes unfold reproduces the
fixed-schedule robustness exactly.  Both trees are built here, desk-scale
only -- node and depth caps are enforced, this is not a large-instance
solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

from .dispatch import ASAP, DispatchPlan, DispatchProtocol, Schedule, run_plan
from .model import MissionModel
from .scenarios import Scenario, discrete_support, stochastic_elements

__all__ = [
    "LeafNode",
    "ChanceNode",
    "DecisionNode",
    "DecisionTree",
    "MultistageResult",
    "TreeFormatError",
    "TreeCapExceeded",
    "evaluate_multistage",
    "build_schedule_choice_tree",
    "build_perfect_information_tree",
]

PROB_TOL = 1e-9


class TreeFormatError(ValueError):
    """Malformed tree (bad probabilities, decision under decision, ...)."""


class TreeCapExceeded(ValueError):
    """Tree exceeds the configured node or depth cap."""


@dataclass(frozen=True)
class LeafNode:
    value: float


@dataclass(frozen=True)
class ChanceNode:
    outcomes: tuple[tuple[str, float, "Node"], ...]  # (label, probability, child)


@dataclass(frozen=True)
class DecisionNode:
    choices: tuple[tuple[str, "Node"], ...]  # (label, child)


Node = Union[LeafNode, ChanceNode, DecisionNode]


@dataclass(frozen=True)
class DecisionTree:
    root: Node
    node_cap: int = 10 ** 6
    depth_cap: int = 64


@dataclass(frozen=True)
class MultistageResult:
    value: float
    policy: dict[str, str] = field(default_factory=dict)  # decision path -> label
    node_count: int = 0


def evaluate_multistage(tree: DecisionTree) -> MultistageResult:
    """Backward induction: expectation at chance nodes, max at decision
    nodes (ties broken toward the first listed choice), returning the root
    value and the chosen label for every decision node reached."""
    policy: dict[str, str] = {}
    count = 0

    def walk(node: Node, path: str, depth: int, under_decision: bool) -> float:
        nonlocal count
        count += 1
        if count > tree.node_cap:
            raise TreeCapExceeded(f"more than {tree.node_cap} nodes")
        if depth > tree.depth_cap:
            raise TreeCapExceeded(f"deeper than {tree.depth_cap}")
        if isinstance(node, LeafNode):
            return node.value
        if isinstance(node, ChanceNode):
            if not node.outcomes:
                raise TreeFormatError(f"chance node {path or 'root'} has no outcomes")
            total = math.fsum(p for _, p, _ in node.outcomes)
            if abs(total - 1.0) > PROB_TOL:
                raise TreeFormatError(
                    f"chance node {path or 'root'} probabilities sum to {total}")
            if any(p < 0 for _, p, _ in node.outcomes):
                raise TreeFormatError(f"chance node {path or 'root'} has negative probability")
            return math.fsum(
                p * walk(child, f"{path}/{label}", depth + 1, False)
                for label, p, child in node.outcomes)
        if isinstance(node, DecisionNode):
            if under_decision:
                raise TreeFormatError(
                    f"decision node {path or 'root'} directly under a decision node")
            if not node.choices:
                raise TreeFormatError(f"decision node {path or 'root'} has no choices")
            best_label, best_value = None, -math.inf
            for label, child in node.choices:
                v = walk(child, f"{path}/{label}", depth + 1, True)
                if v > best_value:
                    best_label, best_value = label, v
            policy[path or "root"] = best_label
            return best_value
        raise TreeFormatError(f"unknown node type {type(node).__name__}")

    value = walk(tree.root, "", 0, False)
    return MultistageResult(value=value, policy=policy, node_count=count)


def _element_supports(model: MissionModel):
    elements = stochastic_elements(model)
    return elements, [discrete_support(el.duration) for el in elements]


def _chance_chain(model: MissionModel, elements, supports, leaf_fn,
                  assignment: dict | None = None, k: int = 0) -> Node:
    """Chance node chain realizing elements in canonical order; ``leaf_fn``
    maps the complete assignment to a node."""
    if assignment is None:
        assignment = {}
    if k == len(elements):
        return leaf_fn(assignment)
    el = elements[k]
    outcomes = []
    for v, p in supports[k]:
        assignment2 = dict(assignment)
        assignment2[(el.kind, el.id)] = v
        child = _chance_chain(model, elements, supports, leaf_fn, assignment2, k + 1)
        outcomes.append((f"{el.id}={v}", p, child))
    return ChanceNode(tuple(outcomes))


def _scenario_of(assignment: dict) -> Scenario:
    realized = {i: v for (kind, i), v in assignment.items() if kind == "activity"}
    delays = {i: v for (kind, i), v in assignment.items() if kind == "delay"}
    return Scenario(realized, delays, "tree")


def build_schedule_choice_tree(model: MissionModel, schedules: list[Schedule],
                               protocol: DispatchProtocol = ASAP,
                               labels: list[str] | None = None) -> DecisionTree:
    """Commit to one schedule at the root, then let chance unfold.

    The root value equals the best fixed-schedule robustness among the
    candidates and the root policy names that schedule.
    """
    if not schedules:
        raise TreeFormatError("no candidate schedules")
    elements, supports = _element_supports(model)
    labels = labels or [f"s{k}" for k in range(len(schedules))]
    plans = [DispatchPlan(model, s) for s in schedules]
    choices = []
    for label, plan in zip(labels, plans):
        def leaf(assignment, plan=plan) -> Node:
            return LeafNode(1.0 if run_plan(plan, _scenario_of(assignment)).success else 0.0)
        choices.append((label, _chance_chain(model, elements, supports, leaf)))
    return DecisionTree(DecisionNode(tuple(choices)))


def build_perfect_information_tree(model: MissionModel, schedules: list[Schedule],
                                   protocol: DispatchProtocol = ASAP,
                                   labels: list[str] | None = None) -> DecisionTree:
    """Let every random element realize, then choose the best candidate
    schedule: the final max sits inside all expectations, so the root value
    is the perfect-reoptimization bound and dominates every fixed schedule
    drawn from the same candidate set."""
    if not schedules:
        raise TreeFormatError("no candidate schedules")
    elements, supports = _element_supports(model)
    labels = labels or [f"s{k}" for k in range(len(schedules))]
    plans = [DispatchPlan(model, s) for s in schedules]

    def leaf(assignment) -> Node:
        sc = _scenario_of(assignment)
        choices = tuple(
            (label, LeafNode(1.0 if run_plan(plan, sc).success else 0.0))
            for label, plan in zip(labels, plans))
        return DecisionNode(choices)

    return DecisionTree(_chance_chain(model, elements, supports, leaf))

"""Prompt construction for the three selection strategies.

Templates follow a fixed skeleton: an optional dataset context paragraph, a
main system sentence with the score range and target description filled in,
output-format instructions, and an optional few-shot block (with reasoning
text only in chain-of-thought variants).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

VARIANTS = (
    "default",
    "examples",
    "examples_cot",
    "context",
    "context_examples",
    "context_examples_cot",
)

OUTPUT_FORMATS = ("json_schema", "markdown_json")

# Prose schema used for models that follow JSON-schema instructions well.
FORMAT_JSON_SCHEMA = (
    "The output should be formatted as a JSON instance that conforms to the JSON schema below.\n"
    "\n"
    'As an example, for the schema {"properties": {"foo": {"title": "Foo", "description": '
    '"a list of strings", "type": "array", "items": {"type": "string"}}}, "required": ["foo"]} '
    'the object {"foo": ["bar", "baz"]} is a well-formatted instance of the schema. '
    'The object {"properties": {"foo": ["bar", "baz"]}} is not well-formatted.\n'
    "\n"
    "Here is the output schema:\n"
    "```\n"
    '{"description": "Langchain Pydantic output parsing structure.", "properties": '
    '{"reasoning": {"title": "Reasoning", "description": "Logical reasoning behind feature '
    'importance score", "type": "string"}, "score": {"title": "Score", "description": '
    '"Feature importance score", "type": "number"}}, "required": ["score"]}\n'
    "```"
)

# Fenced-markdown variant for model families that need literal examples.
FORMAT_MARKDOWN_JSON = (
    "The output should be a markdown code snippet formatted in the following schema, "
    'including the leading and trailing "```json" and "```":\n'
    "\n"
    "```json\n"
    "{\n"
    "\t\"reasoning\": str  // Logical reasoning behind feature importance score\n"
    "\t\"score\": float  // Feature importance score\n"
    "}\n"
    "```"
)

RANK_FORMAT_INSTRUCTIONS = (
    "Your response should be a numbered list with each item on a new line. "
    "For example:   1. foo  2. bar  3. baz\n"
    "\n"
    "Only output the ranking. Do not output dialogue or explanations for the ranking. "
    "Do not exclude any features in the ranking."
)


@dataclass
class FewShot:
    concept: str
    score: float
    reasoning: str | None = None


@dataclass
class TaskSpec:
    """What the prompts need to know about a prediction task."""

    name: str
    task: str  # "classification" | "regression"
    target_description: str
    context: str | None = None
    few_shots: list = field(default_factory=list)
    score_range: tuple = (0.0, 1.0)
    target_description_rank: str | None = None
    target_description_seq: str | None = None

    def __post_init__(self):
        lo, hi = self.score_range
        if not lo < hi:
            raise ValueError("score_range must satisfy min < max")
        for shot in self.few_shots:
            if not lo <= shot.score <= hi:
                raise ValueError(f"few-shot score {shot.score} outside range {self.score_range}")

    @property
    def metric_name(self) -> str:
        return "AUROC" if self.task == "classification" else "MAE"

    @property
    def rank_target(self) -> str:
        return self.target_description_rank or self.target_description

    @property
    def seq_target(self) -> str:
        return self.target_description_seq or self.target_description


@dataclass
class PromptBundle:
    system: str
    user: str
    history: tuple = ()  # prior (user, assistant) turns, LLM-Seq only

    def __post_init__(self):
        if not self.system or not self.user:
            raise ValueError("system and user prompts must be non-empty")

    def to_messages(self) -> list:
        msgs = [{"role": "system", "content": self.system}]
        for user, assistant in self.history:
            msgs.append({"role": "user", "content": user})
            msgs.append({"role": "assistant", "content": assistant})
        msgs.append({"role": "user", "content": self.user})
        return msgs


def variant_uses_context(variant: str) -> bool:
    return variant.startswith("context")


def variant_uses_examples(variant: str) -> bool:
    return "examples" in variant


def variant_uses_cot(variant: str) -> bool:
    return variant.endswith("cot")


def _check_variant(task: TaskSpec, variant: str):
    if variant not in VARIANTS:
        raise ValueError(f"unknown prompt variant: {variant}")
    if variant_uses_context(variant) and not task.context:
        raise ValueError(f"variant {variant!r} requires dataset context")
    if variant_uses_examples(variant) and not task.few_shots:
        raise ValueError(f"variant {variant!r} requires few-shot examples")


def format_bound(x: float) -> str:
    """Render a score bound the way the templates do: 8.0 -> "8", 0.5 -> "0.5"."""
    xf = float(x)
    return str(int(xf)) if xf == int(xf) else f"{xf:g}"


def _few_shot_block(shots, with_cot: bool) -> str:
    lead = "Here is an example output:" if len(shots) == 1 else "Here are some example outputs:"
    parts = [lead]
    for shot in shots:
        lines = ["{"]
        if with_cot and shot.reasoning:
            lines.append(f'    "reasoning": "{shot.reasoning}",')
        lines.append(f'    "score": {shot.score}')
        lines.append("}")
        parts.append(f"- Variable: {shot.concept}\n" + "\n".join(lines))
    return "\n\n".join(parts)


def score_system_sentence(task: TaskSpec, score_range=None) -> str:
    lo, hi = score_range if score_range is not None else task.score_range
    return (
        "For each feature input by the user, your task is to provide a feature importance "
        f"score (between {format_bound(lo)} and {format_bound(hi)}; larger value indicates "
        f"greater importance) for predicting {task.target_description} and a reasoning "
        "behind how the importance score was assigned."
    )


def build_score_prompt(task: TaskSpec, concept: str, variant: str = "default",
                       output_format: str = "json_schema", score_range=None) -> PromptBundle:
    """Prompt for one concept's numeric importance score."""
    _check_variant(task, variant)
    if output_format not in OUTPUT_FORMATS:
        raise ValueError(f"unknown output format: {output_format}")
    parts = []
    if variant_uses_context(variant):
        parts.append(f"Context: {task.context}")
    parts.append(score_system_sentence(task, score_range))
    parts.append(FORMAT_JSON_SCHEMA if output_format == "json_schema" else FORMAT_MARKDOWN_JSON)
    if variant_uses_examples(variant):
        parts.append(_few_shot_block(task.few_shots, variant_uses_cot(variant)))
    user = (
        f'Provide a score and reasoning for "{concept}" formatted according to the '
        "output schema above:"
    )
    return PromptBundle(system="\n\n".join(parts), user=user)


def rank_system_prompt(task: TaskSpec) -> str:
    return (
        "Given a list of features, rank them according to their importances in predicting "
        f"{task.rank_target}. The ranking should be in descending order, starting with the "
        "most important feature."
    )


def build_rank_prompt(task: TaskSpec, concepts) -> PromptBundle:
    """Prompt for a single global ranking of all concepts."""
    concepts = list(concepts)
    if len(concepts) < 2:
        raise ValueError("ranking requires at least 2 concepts")
    system = rank_system_prompt(task) + "\n\n" + RANK_FORMAT_INSTRUCTIONS
    user = (
        f"Rank all {len(concepts)} features in the following list: "
        f'"{", ".join(concepts)}".'
    )
    return PromptBundle(system=system, user=user)


def seq_system_prompt(task: TaskSpec) -> str:
    return (
        "Given a list of features already selected and a list of candidate features "
        "available, your task is to output the next feature that should be included to "
        f"maximally improve the performance in predicting {task.seq_target}."
    )


def build_seq_prompt(task: TaskSpec, selected, cv_value, metric_name: str, candidates,
                     history=(), buffer_size: int | None = None) -> PromptBundle:
    """One turn of the sequential-selection dialogue.

    ``cv_value`` is rendered with 4 decimals, or "N/A" on the first turn;
    ``history`` is truncated to the most recent ``buffer_size`` (user,
    assistant) pairs (None keeps everything).
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("candidate list must be non-empty")
    if buffer_size is not None:
        if buffer_size < 0:
            raise ValueError("buffer_size must be >= 0")
        history = tuple(history)[-buffer_size:] if buffer_size > 0 else ()
    value = "N/A" if cv_value is None else f"{cv_value:.4f}"
    user = (
        f"I used the features [{', '.join(selected)}], and the trained model achieved a "
        f"test {metric_name} of {value}. What feature should I add next from: "
        f"{', '.join(candidates)}? Give me just the name of the feature to add (no other text)."
    )
    return PromptBundle(system=seq_system_prompt(task), user=user, history=tuple(history))


def load_task_specs(path=None) -> dict:
    """Load named task specs from a fixture file (packaged one by default)."""
    if path is None:
        text = resources.files("promptselect.fixtures").joinpath("tasks.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    raw = json.loads(text)
    specs = {}
    for name, doc in raw.items():
        shots = [FewShot(s["concept"], s["score"], s.get("reasoning")) for s in doc.get("few_shots", [])]
        specs[name] = TaskSpec(
            name=name,
            task=doc["task"],
            target_description=doc["target"],
            context=doc.get("context"),
            few_shots=shots,
            score_range=tuple(doc.get("score_range", (0.0, 1.0))),
            target_description_rank=doc.get("target_rank"),
            target_description_seq=doc.get("target_seq"),
        )
    return specs

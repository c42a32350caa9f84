"""Prompt templates for the answering model."""

TRAIN_SCORING_TEMPLATE = (
    "{question} Please answer with the option's letter from the given "
    "choices directly.\n\nAnswer: "
)

THINK_TEMPLATE = (
    "{question} Only give the best option. You FIRST think about the "
    "reasoning process as an internal monologue and then provide the final "
    "answer. The reasoning process MUST BE enclosed within <think></think> "
    "tags. The final answer MUST BE put within <answer></answer> tags."
)

NO_THINK_TEMPLATE = "{question} Only give the best option."

_TEMPLATES = {
    "train-scoring": TRAIN_SCORING_TEMPLATE,
    "think": THINK_TEMPLATE,
    "no-think": NO_THINK_TEMPLATE,
}

OPTION_LETTERS = "ABCDEFGHIJ"


def format_question(question: str, options: list[str]) -> str:
    """Render a multiple-choice question with lettered options."""
    lines = [question.strip()]
    for letter, option in zip(OPTION_LETTERS, options):
        lines.append(f"{letter}. {option}")
    return "\n".join(lines)


def build_prompt(mode: str, question: str, options: list[str]) -> str:
    return _TEMPLATES[mode].format(question=format_question(question, options))

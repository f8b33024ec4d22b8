"""Closed vocabularies for agent outputs and prompts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

PAD = "<pad>"
NONE_ARG = "<none>"


class SchemaError(ValueError):
    """An action, token or id that the schema cannot express."""


def tokenize(text: str) -> list[str]:
    return text.lower().split()


@dataclass(frozen=True)
class ActionSchema:
    verbs: tuple[str, ...]
    arguments: tuple[str, ...]
    prompt_vocab: tuple[str, ...]
    rationale_vocab: tuple[str, ...]
    rationale_length: int = 8
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("verbs", "arguments", "prompt_vocab", "rationale_vocab"):
            values = getattr(self, name)
            if len(set(values)) != len(values):
                raise SchemaError(f"duplicate entries in {name}")
        if self.rationale_vocab[0] != PAD:
            raise SchemaError("rationale vocabulary must start with the pad token")
        index = {
            "verbs": {v: i for i, v in enumerate(self.verbs)},
            "arguments": {v: i for i, v in enumerate(self.arguments)},
            "prompt": {v: i for i, v in enumerate(self.prompt_vocab)},
            "rationale": {v: i for i, v in enumerate(self.rationale_vocab)},
        }
        object.__setattr__(self, "_index", index)

    @property
    def n_verbs(self) -> int:
        return len(self.verbs)

    @property
    def n_arguments(self) -> int:
        return len(self.arguments)

    @property
    def n_prompt_tokens(self) -> int:
        return len(self.prompt_vocab)

    @property
    def n_rationale_tokens(self) -> int:
        return len(self.rationale_vocab)

    def verb_id(self, verb: str) -> int:
        try:
            return self._index["verbs"][verb]
        except KeyError:
            raise SchemaError(f"unknown action verb {verb!r}") from None

    def argument_id(self, arg: str) -> int:
        try:
            return self._index["arguments"][arg]
        except KeyError:
            raise SchemaError(f"unknown action argument {arg!r}") from None

    def encode_prompt(self, text: str) -> list[int]:
        ids = []
        for tok in tokenize(text):
            if tok not in self._index["prompt"]:
                raise SchemaError(f"prompt token {tok!r} is out of vocabulary")
            ids.append(self._index["prompt"][tok])
        if not ids:
            raise SchemaError("empty prompt")
        return ids

    def decode_prompt(self, ids: Sequence[int]) -> str:
        return " ".join(self.prompt_vocab[i] for i in ids)

    def encode_rationale(self, text: str) -> list[int]:
        toks = tokenize(text)
        if len(toks) > self.rationale_length:
            raise SchemaError(
                f"rationale has {len(toks)} tokens, limit is {self.rationale_length}"
            )
        ids = []
        for tok in toks:
            if tok not in self._index["rationale"]:
                raise SchemaError(f"rationale token {tok!r} is out of vocabulary")
            ids.append(self._index["rationale"][tok])
        return ids + [0] * (self.rationale_length - len(ids))

    def decode_rationale(self, ids: Sequence[int]) -> str:
        return " ".join(self.rationale_vocab[i] for i in ids if i != 0)

    def check_prompt_ids(self, ids: Iterable[int]) -> None:
        for i in ids:
            if not 0 <= int(i) < self.n_prompt_tokens:
                raise SchemaError(f"prompt token id {i} is out of vocabulary")

    def to_dict(self) -> dict:
        return {
            "verbs": list(self.verbs),
            "arguments": list(self.arguments),
            "prompt_vocab": list(self.prompt_vocab),
            "rationale_vocab": list(self.rationale_vocab),
            "rationale_length": self.rationale_length,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ActionSchema":
        return cls(
            verbs=tuple(d["verbs"]),
            arguments=tuple(d["arguments"]),
            prompt_vocab=tuple(d["prompt_vocab"]),
            rationale_vocab=tuple(d["rationale_vocab"]),
            rationale_length=int(d["rationale_length"]),
        )


@dataclass(frozen=True)
class AgentOutput:
    """Structured agent decision: verb, argument and rationale token ids."""

    verb: int
    argument: int
    rationale: tuple[int, ...]

    def action(self) -> tuple[int, int]:
        return (self.verb, self.argument)

    def validate(self, schema: ActionSchema) -> None:
        if not 0 <= self.verb < schema.n_verbs:
            raise SchemaError(f"verb id {self.verb} outside vocabulary")
        if not 0 <= self.argument < schema.n_arguments:
            raise SchemaError(f"argument id {self.argument} outside vocabulary")
        if len(self.rationale) != schema.rationale_length:
            raise SchemaError("rationale has the wrong length")
        for r in self.rationale:
            if not 0 <= r < schema.n_rationale_tokens:
                raise SchemaError(f"rationale id {r} outside vocabulary")

    def describe(self, schema: ActionSchema) -> str:
        arg = schema.arguments[self.argument]
        arg = "" if arg == NONE_ARG else repr(arg)
        return f"{schema.verbs[self.verb]}({arg})"

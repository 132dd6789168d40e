"""Prompt templates: render typing examples into masked prompted inputs.

Hard templates append a short declarative sentence that copies the
mention and ends in a single mask slot.  Soft templates append learnable
special tokens around the mention copy instead of natural language.
Entity hiding replaces every occurrence of the mention with a reserved
symbol so that self-supervised training cannot memorize surface forms.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigurationError, RenderError

if TYPE_CHECKING:
    from .datasets import TypingExample

__all__ = [
    "MASK_TOKEN",
    "HIDE_TOKEN",
    "HARD_TEMPLATE_IDS",
    "TemplateSpec",
    "PromptedInput",
    "render",
    "render_hard",
    "render_soft",
    "apply_hiding",
    "detokenize",
]

MASK_TOKEN = "[MASK]"
HIDE_TOKEN = "[Hide]"

HARD_TEMPLATE_IDS = ("t1", "t2", "t3", "t3b")

# Tokens a hard template may introduce beyond the sentence and mention.
HARD_STATIC_TOKENS = ("In", "this", "sentence", ",", "is", "a", ".", MASK_TOKEN)

_NO_SPACE_BEFORE = {".", ",", "!", "?", ";", ":"}

_TERMINAL = (".", "!", "?")


@dataclass(frozen=True)
class TemplateSpec:
    """Selects a template: a hard id (t1/t2/t3/t3b) or a soft length."""

    kind: str
    hard_id: str | None = None
    soft_length: int | None = None

    def __post_init__(self) -> None:
        if self.kind == "hard":
            if self.hard_id not in HARD_TEMPLATE_IDS or self.soft_length is not None:
                raise ConfigurationError(
                    f"hard template spec needs hard_id in {HARD_TEMPLATE_IDS}, "
                    f"got hard_id={self.hard_id!r} soft_length={self.soft_length!r}"
                )
        elif self.kind == "soft":
            if self.hard_id is not None or self.soft_length is None:
                raise ConfigurationError("soft template spec needs only soft_length")
            if not 1 <= self.soft_length <= 16:
                raise ConfigurationError(
                    f"soft_length must be in [1, 16], got {self.soft_length}"
                )
        else:
            raise ConfigurationError(f"unknown template kind {self.kind!r}")

    @classmethod
    def hard(cls, hard_id: str) -> "TemplateSpec":
        return cls(kind="hard", hard_id=hard_id.lower())

    @classmethod
    def soft(cls, soft_length: int) -> "TemplateSpec":
        return cls(kind="soft", soft_length=soft_length)

    @property
    def soft_token_names(self) -> tuple[str, ...]:
        if self.kind != "soft":
            return ()
        return ("[P]",) + tuple(f"[P{i}]" for i in range(1, self.soft_length + 1))

    def static_tokens(self) -> tuple[str, ...]:
        """Tokens this template can add beyond sentence and mention copies."""
        if self.kind == "hard":
            return HARD_STATIC_TOKENS
        return self.soft_token_names + (MASK_TOKEN,)


@dataclass(frozen=True)
class PromptedInput:
    """A rendered sentence plus template suffix with a single mask slot.

    ``mention_copy_span`` is the [start, end) token span of the mention
    copy inside the appended template (None once the provenance is lost,
    e.g. after file round-trips without span information).
    ``sentence_length`` is the token count of the original sentence, so
    the appended suffix is ``text_tokens[sentence_length:]``.
    """

    text_tokens: tuple[str, ...]
    mask_index: int
    sentence_length: int
    mention_copy_span: tuple[int, int] | None = None
    special_token_names: tuple[str, ...] = ()
    hidden: bool = False

    def __post_init__(self) -> None:
        if not self.text_tokens:
            raise RenderError("prompted input has no tokens")
        mask_positions = [i for i, t in enumerate(self.text_tokens) if t == MASK_TOKEN]
        if mask_positions != [self.mask_index]:
            raise RenderError(
                f"expected exactly one mask at index {self.mask_index}, "
                f"found mask tokens at {mask_positions}"
            )
        if self.mask_index < self.sentence_length:
            raise RenderError("mask slot must come after the original sentence")
        if self.mention_copy_span is not None:
            s, e = self.mention_copy_span
            if not (0 <= s < e <= len(self.text_tokens)):
                raise RenderError(f"invalid mention copy span {self.mention_copy_span}")

    @property
    def mention_tokens(self) -> tuple[str, ...]:
        if self.mention_copy_span is None:
            return ()
        s, e = self.mention_copy_span
        return self.text_tokens[s:e]

    @property
    def rendered_text(self) -> str:
        return detokenize(self.text_tokens)


def detokenize(tokens: tuple[str, ...] | list[str]) -> str:
    """Join tokens with spaces, attaching punctuation to the previous token."""
    parts: list[str] = []
    for tok in tokens:
        if parts and tok in _NO_SPACE_BEFORE:
            parts[-1] += tok
        else:
            parts.append(tok)
    return " ".join(parts)


def _check_mention(x: "TypingExample") -> tuple[str, ...]:
    mention = tuple(x.mention_tokens)
    if not mention or not any(mention):
        raise RenderError(f"example {x.id!r} has an empty mention")
    if MASK_TOKEN in mention or MASK_TOKEN in x.tokens:
        raise RenderError(f"example {x.id!r} already contains the mask token")
    return mention


def _sentence_with_period(tokens: tuple[str, ...]) -> tuple[str, ...]:
    if tokens and tokens[-1].endswith(_TERMINAL):
        return tokens
    return tokens + (".",)


def render_hard(spec: TemplateSpec, x: "TypingExample") -> PromptedInput:
    """Append a declarative template after the sentence.

    t1:  <mention> is [MASK].
    t2:  <mention> is a [MASK].
    t3:  In this sentence, <mention> is a [MASK].
    t3b: In this sentence, <mention> is [MASK].

    A sentence-final period is inserted first when the sentence does not
    already end in terminal punctuation, so the appended suffix always
    starts a new sentence and removing it recovers the input exactly.
    """
    if spec.kind != "hard":
        raise ConfigurationError("render_hard requires a hard template spec")
    mention = _check_mention(x)
    sentence = tuple(x.tokens)
    lead = _sentence_with_period(sentence)

    prefix: tuple[str, ...]
    if spec.hard_id in ("t3", "t3b"):
        prefix = ("In", "this", "sentence", ",")
    else:
        prefix = ()
    linker = ("is", "a") if spec.hard_id in ("t2", "t3") else ("is",)

    copy_start = len(lead) + len(prefix)
    tokens = lead + prefix + mention + linker + (MASK_TOKEN, ".")
    mask_index = len(tokens) - 2
    return PromptedInput(
        text_tokens=tokens,
        mask_index=mask_index,
        sentence_length=len(sentence),
        mention_copy_span=(copy_start, copy_start + len(mention)),
    )


def render_soft(spec: TemplateSpec, x: "TypingExample") -> PromptedInput:
    """Append "[P] <mention> [P1] ... [Pl] [MASK]" after the sentence.

    The l+1 special tokens are learnable; their names are recorded on the
    output so the backend can register embeddings for them.
    """
    if spec.kind != "soft":
        raise ConfigurationError("render_soft requires a soft template spec")
    mention = _check_mention(x)
    sentence = tuple(x.tokens)
    names = spec.soft_token_names

    copy_start = len(sentence) + 1
    tokens = sentence + (names[0],) + mention + names[1:] + (MASK_TOKEN,)
    return PromptedInput(
        text_tokens=tokens,
        mask_index=len(tokens) - 1,
        sentence_length=len(sentence),
        mention_copy_span=(copy_start, copy_start + len(mention)),
        special_token_names=names,
    )


def render(spec: TemplateSpec, x: "TypingExample") -> PromptedInput:
    if spec.kind == "hard":
        return render_hard(spec, x)
    return render_soft(spec, x)


def _replace_mention(
    tokens: tuple[str, ...],
    mention: tuple[str, ...],
    mask_index: int,
    copy_start: int | None,
    sentence_length: int,
) -> tuple[tuple[str, ...], int, tuple[int, int] | None, int]:
    """Replace every non-overlapping mention occurrence with the hide symbol."""
    n = len(mention)
    out: list[str] = []
    new_mask = -1
    new_copy: tuple[int, int] | None = None
    last_replacement: tuple[int, int] | None = None
    new_sentence_length = sentence_length
    i = 0
    while i < len(tokens):
        if i == sentence_length:
            new_sentence_length = len(out)
        if i + n <= len(tokens) and tokens[i : i + n] == mention:
            pos = len(out)
            out.append(HIDE_TOKEN)
            last_replacement = (pos, pos + 1)
            if copy_start is not None and i == copy_start:
                new_copy = last_replacement
            i += n
        else:
            if i == mask_index:
                new_mask = len(out)
            out.append(tokens[i])
            i += 1
    if new_copy is None:
        # The template copy sits at the end of the token list, so if exact
        # span alignment was lost to an overlapping earlier occurrence the
        # last replacement is the copy.
        new_copy = last_replacement
    return tuple(out), new_mask, new_copy, new_sentence_length


def apply_hiding(
    p: PromptedInput, alpha: float, rng: np.random.Generator
) -> PromptedInput:
    """With probability ``alpha``, hide the mention everywhere in ``p``.

    Hiding replaces each occurrence of the mention token sequence, in the
    original sentence and in the template copy alike, with one
    ``[Hide]`` token.  The random draw consumes exactly one value from
    ``rng`` whether or not hiding happens.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigurationError(f"hiding probability must be in [0, 1], got {alpha}")
    if float(rng.random()) >= alpha:
        return p
    if p.hidden:
        return p
    if p.mention_copy_span is None:
        raise ConfigurationError("cannot hide a prompted input without a mention span")
    tokens, mask_index, copy_span, sentence_length = _replace_mention(
        p.text_tokens,
        p.mention_tokens,
        p.mask_index,
        p.mention_copy_span[0],
        p.sentence_length,
    )
    return replace(
        p,
        text_tokens=tokens,
        mask_index=mask_index,
        sentence_length=sentence_length,
        mention_copy_span=copy_span,
        hidden=True,
    )

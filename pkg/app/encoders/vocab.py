"""
Vocabulário do codificador congelado.

Palavras (perguntas, nomes de relações e entidades) e caracteres de números
vivem em espaços separados; no arquivo, tokens de caractere levam o prefixo
`##`.
"""
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

from app.core.exceptions import LoadError
from app.kb.models import KnowledgeBase

UNK = "[UNK]"
PAD = "[PAD]"
START = "[S]"
END = "[E]"
SEP = "[SEP]"
SPECIAL_TOKENS = (PAD, UNK, START, END, SEP)

NUMBER_CHARS = tuple("0123456789.-,")
CHAR_PREFIX = "##"

WORD_PATTERN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> List[str]:
    return WORD_PATTERN.findall(text.lower())


def name_words(name: str) -> List[str]:
    """'tv.program.num_of_episodes' -> ['tv', 'program', 'num', 'of', 'episodes']"""
    return tokenize(name)


@dataclass(frozen=True)
class Vocabulary:
    words: Tuple[str, ...]
    chars: Tuple[str, ...] = NUMBER_CHARS
    word_ids: Dict[str, int] = field(init=False, repr=False, compare=False)
    char_ids: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        word_tokens = list(SPECIAL_TOKENS) + [w for w in self.words if w not in SPECIAL_TOKENS]
        char_tokens = [PAD, START, END] + list(self.chars)
        if len(set(word_tokens)) != len(word_tokens) or len(set(char_tokens)) != len(char_tokens):
            raise ValueError("tokens do vocabulário devem ser únicos")
        object.__setattr__(self, "word_ids", {token: i for i, token in enumerate(word_tokens)})
        object.__setattr__(self, "char_ids", {token: i for i, token in enumerate(char_tokens)})

    @property
    def word_tokens(self) -> List[str]:
        return list(self.word_ids)

    @property
    def char_tokens(self) -> List[str]:
        return list(self.char_ids)

    def word_id(self, token: str) -> int:
        return self.word_ids.get(token, self.word_ids[UNK])

    def missing_kb_words(self, kb: KnowledgeBase) -> List[str]:
        """Palavras de nomes de relações e entidades da KB que cairiam em UNK."""
        names = list(kb.relations) + list(kb.entities)
        return sorted({word for name in names for word in name_words(name) if word not in self.word_ids})

    def save(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            for token in self.word_tokens:
                handle.write(token + "\n")
            for char in self.chars:
                handle.write(CHAR_PREFIX + char + "\n")

    @classmethod
    def load(cls, path: Path) -> "Vocabulary":
        words: List[str] = []
        chars: List[str] = []
        with open(path, encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                token = line.rstrip("\n")
                if not token:
                    raise LoadError("linha vazia no vocabulário", line_number=line_number)
                if token.startswith(CHAR_PREFIX) and len(token) > len(CHAR_PREFIX):
                    chars.append(token[len(CHAR_PREFIX):])
                elif token not in SPECIAL_TOKENS:
                    words.append(token)
        return cls(words=tuple(words), chars=tuple(chars) or NUMBER_CHARS)


def build_vocabulary(kb: KnowledgeBase, texts: Iterable[str] = ()) -> Vocabulary:
    """Palavras dos nomes de relações e entidades mais as das perguntas, em ordem."""
    seen: Dict[str, None] = {}
    for name in sorted(kb.relations):
        seen.update(dict.fromkeys(name_words(name)))
    for entity in sorted(kb.entities):
        seen.update(dict.fromkeys(name_words(entity)))
    for text in texts:
        seen.update(dict.fromkeys(tokenize(text)))
    return Vocabulary(words=tuple(token for token in seen if token not in SPECIAL_TOKENS))

"""Gradient-guided trigger-token search over the dual encoder's vocabulary.

A prompt template combines shared trigger slots with the class text.
Candidate replacement tokens for one slot are scored by a first-order
Taylor approximation of the classification loss around the current slot
embedding (approx loss = L + (e_candidate - e_current) . dL/de_slot); a
left-to-right beam search then evaluates the shortlisted candidates with
the true loss and keeps the best beams. Final prompt sets are picked by
validation accuracy and ensembled in embedding space by the model core.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import grad as G
from .data import Dataset
from .models.encoder import DualEncoder
from .models.zeroshot import synthesize_zero_shot_classifier
from .rng import substream

DEFAULT_TEMPLATE = "[T][T][T][T][C]"
DEFAULT_INIT_TEXT = "A photo of a"


@dataclass(frozen=True)
class PromptTemplate:
    """Slot sequence over trigger slots [T], the class slot [C], literals."""

    slots: tuple[str, ...]

    def __post_init__(self):
        if sum(1 for s in self.slots if s == "[C]") != 1:
            raise ValueError("template needs exactly one [C] slot")
        if self.trigger_count < 1:
            raise ValueError("template needs at least one [T] slot")

    @classmethod
    def parse(cls, text: str) -> "PromptTemplate":
        slots, rest = [], text
        while rest:
            if rest.startswith("[T]") or rest.startswith("[C]"):
                slots.append(rest[:3])
                rest = rest[3:]
            else:
                cut = min([i for i in (rest.find("[T]"), rest.find("[C]")) if i >= 0],
                          default=len(rest))
                literal = rest[:cut].strip()
                if literal:
                    slots.extend(literal.split())
                rest = rest[cut:]
        return cls(tuple(slots))

    def __str__(self) -> str:
        return "".join(self.slots)

    @property
    def trigger_count(self) -> int:
        return sum(1 for s in self.slots if s == "[T]")

    def token_ids(self, trigger_ids, class_token_ids, tokenizer):
        """Token-id sequence plus the position of each trigger slot."""
        if len(trigger_ids) != self.trigger_count:
            raise ValueError(f"expected {self.trigger_count} trigger tokens, "
                             f"got {len(trigger_ids)}")
        ids, positions, t = [], [], 0
        for slot in self.slots:
            if slot == "[T]":
                positions.append(len(ids))
                ids.append(int(trigger_ids[t]))
                t += 1
            elif slot == "[C]":
                ids.extend(class_token_ids)
            else:
                ids.extend(tokenizer.encode(slot))
        return ids, positions

    def render_text(self, trigger_words) -> str:
        """Prompt string with a {label} placeholder for the class slot."""
        words, t = [], 0
        for slot in self.slots:
            if slot == "[T]":
                words.append(trigger_words[t])
                t += 1
            elif slot == "[C]":
                words.append("{label}")
            else:
                words.append(slot)
        return " ".join(words)


@dataclass
class SearchConfig:
    top_k: int = 20
    beam_size: int = 5
    steps: int = 4
    template: str = DEFAULT_TEMPLATE
    init_text: str = DEFAULT_INIT_TEXT
    scoring_batch_size: int = 512
    ensemble_size: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SearchConfig":
        return cls(**json.loads(text))


class ZeroShotPromptObjective:
    """Mean zero-shot cross-entropy of a trigger sequence over a scoring
    batch, differentiable down to one trigger slot embedding."""

    def __init__(self, encoder: DualEncoder, dataset: Dataset,
                 template: PromptTemplate, batch_size: int = 512, seed: int = 0):
        self.encoder = encoder
        self.template = template
        self.dataset = dataset
        self.batch_size = min(batch_size, len(dataset))
        self.seed = seed
        self.class_token_ids = [encoder.tokenizer.encode(name)
                                for name in dataset.class_names]
        self._all_embs = np.stack([encoder.embed_image(ex.image) for ex in dataset])
        self._all_labels = np.array([ex.label for ex in dataset])
        self.begin_step(0)

    @property
    def vocab_size(self) -> int:
        return len(self.encoder.tokenizer)

    def token_embedding_matrix(self) -> np.ndarray:
        return self.encoder.params["emb"]

    def begin_step(self, step: int) -> None:
        """Fixed seeded subsample of the scoring split for this step."""
        if self.batch_size >= len(self.dataset):
            idx = np.arange(len(self.dataset))
        else:
            idx = substream(self.seed, "scoring-batch", step).choice(
                len(self.dataset), size=self.batch_size, replace=False)
        self._img = self._all_embs[idx]
        self._labels = self._all_labels[idx]

    def _class_rows(self, trigger_ids, slot=None, slot_var=None):
        rows = []
        for ctoks in self.class_token_ids:
            ids, positions = self.template.token_ids(trigger_ids, ctoks,
                                                     self.encoder.tokenizer)
            overrides = {positions[slot]: slot_var} if slot_var is not None else None
            rows.append(G.reshape(
                self.encoder.text_embed_node(ids, overrides=overrides), (-1,)))
        return G.row_stack(rows)

    def true_loss(self, trigger_ids) -> float:
        txt = self._class_rows(tuple(trigger_ids))
        logits = G.mul(G.matmul(self._img, G.transpose(txt)),
                       self.encoder.temperature)
        return float(G.value_of(G.cross_entropy(logits, self._labels)))

    def loss_and_slot_grad(self, trigger_ids, slot: int):
        trigger_ids = tuple(trigger_ids)
        if not (0 <= slot < self.template.trigger_count):
            raise ValueError(f"slot {slot} is not a trigger slot of {self.template}")
        cur = self.encoder.params["emb"][trigger_ids[slot]]
        slot_var = G.Var(cur)
        txt = self._class_rows(trigger_ids, slot=slot, slot_var=slot_var)
        logits = G.mul(G.matmul(self._img, G.transpose(txt)),
                       self.encoder.temperature)
        loss = G.cross_entropy(logits, self._labels)
        G.backward(loss)
        g = slot_var.grad if slot_var.grad is not None else np.zeros_like(cur)
        return float(loss.value), g


def score_token_candidates(objective, trigger_ids, slot: int, top_k: int):
    """top_k candidate tokens with the smallest approximate replacement
    loss (ties broken by lowest token id); the current token always scores
    exactly the current loss."""
    loss, g = objective.loss_and_slot_grad(trigger_ids, slot)
    emb = objective.token_embedding_matrix()
    cur = emb[trigger_ids[slot]]
    approx = loss + (emb - cur) @ g
    order = np.lexsort((np.arange(len(approx)), approx))
    k = min(top_k, len(approx))
    return [(int(t), float(approx[t])) for t in order[:k]]


@dataclass
class SearchResult:
    ranked: list[tuple[float, tuple[int, ...]]]   # final beams, best first
    per_step_best: list[tuple[int, ...]]
    init: tuple[int, ...]


def beam_search_prompts(objective, init_trigger_ids, config: SearchConfig) -> SearchResult:
    """Left-to-right beam search over per-slot candidate shortlists.

    Each step expands every beam at the next slot (cycling) with its top_k
    candidates, keeps the unchanged beam in the pool, evaluates true losses
    on the step's scoring batch and retains the beam_size best.
    """
    template = PromptTemplate.parse(config.template)
    init = tuple(int(t) for t in init_trigger_ids)
    if len(init) != template.trigger_count:
        raise ValueError(f"init has {len(init)} tokens, template needs "
                         f"{template.trigger_count}")
    objective.begin_step(0)
    beams = [(objective.true_loss(init), init)]
    per_step_best = []
    for step in range(config.steps):
        slot = step % template.trigger_count
        objective.begin_step(step)
        pool = {seq for _, seq in beams}
        for _, seq in beams:
            for tok, _ in score_token_candidates(objective, seq, slot, config.top_k):
                cand = list(seq)
                cand[slot] = tok
                pool.add(tuple(cand))
        scored = sorted((objective.true_loss(seq), seq) for seq in pool)
        beams = scored[:config.beam_size]
        per_step_best.append(beams[0][1])
    return SearchResult(ranked=beams, per_step_best=per_step_best, init=init)


@dataclass
class PromptEnsemble:
    sequences: list[tuple[int, ...]]
    rendered: list[str]
    validation_accuracy: list[float]
    classifier: object
    short_of_candidates: bool = False


def select_prompt_ensemble(candidates, encoder: DualEncoder, validation: Dataset,
                           n: int, template: PromptTemplate | str = DEFAULT_TEMPLATE):
    """Deduplicate candidate trigger sequences, rank them by validation
    accuracy (ties by earlier discovery) and ensemble the top n in
    embedding space."""
    if isinstance(template, str):
        template = PromptTemplate.parse(template)
    if not candidates:
        raise ValueError("no candidate sequences to select from")
    unique = list(dict.fromkeys(tuple(c) for c in candidates))
    scored = []
    for rank, seq in enumerate(unique):
        words = [encoder.tokenizer.vocab[t] for t in seq]
        prompt = template.render_text(words)
        clf = synthesize_zero_shot_classifier(encoder, [[prompt]] * validation.n_classes,
                                              validation.class_names)
        acc = clf.accuracy(validation)
        scored.append((-acc, rank, seq, prompt, acc))
    scored.sort()
    short = n > len(scored)
    chosen = scored[:min(n, len(scored))]
    prompts = [prompt for (_, _, _, prompt, _) in chosen]
    clf = synthesize_zero_shot_classifier(encoder, [prompts] * validation.n_classes,
                                          validation.class_names)
    return PromptEnsemble(
        sequences=[seq for (_, _, seq, _, _) in chosen],
        rendered=prompts,
        validation_accuracy=[acc for (*_, acc) in chosen],
        classifier=clf,
        short_of_candidates=short,
    )


def save_prompt_set(path, ensemble: PromptEnsemble, config: SearchConfig) -> None:
    doc = {
        "template": config.template,
        "sequences": [list(s) for s in ensemble.sequences],
        "rendered": ensemble.rendered,
        "validation_accuracy": ensemble.validation_accuracy,
        "config": json.loads(config.to_json()),
        "short_of_candidates": ensemble.short_of_candidates,
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)

"""One-vs-rest multinomial Naive Bayes training, candidate selection, scoring.

Each concern gets its own binary classifier (concern vs. everything else),
so per-concern affinities are independent posteriors that need not sum to 1.
Training generates candidates over randomized hold-out splits, scores them
with confusion matrices, and the most accurate configuration is retrained
on the full corpus.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

import numpy as np

from . import ConcernMapError
from .corpus import TokenBag, TrainingCorpus
from .hashing import canonical_json_bytes, digest_of, sha256_hex

MODEL_FORMAT = "concernmap-model/1"

DEFAULT_ALPHA = 1.0
DEFAULT_N_CANDIDATES = 10
DEFAULT_HOLDOUT_FRACTION = 1.0 / 3.0


class TrainingError(ConcernMapError):
    """Training could not produce a usable classifier."""


class DegenerateSplitError(TrainingError):
    """A hold-out split left some concern without training documents."""


class ModelFormatError(ConcernMapError):
    """Unreadable or version-mismatched model payload."""


@dataclass(eq=False)
class ClassifierModel:
    """Trained per-concern one-vs-rest NB parameters plus vocabulary."""

    concerns: list[str]
    vocabulary: list[str]
    alpha: float
    log_prior_pos: np.ndarray       # shape (C,)
    log_prior_neg: np.ndarray       # shape (C,)
    log_likelihood_pos: np.ndarray  # shape (C, V)
    log_likelihood_neg: np.ndarray  # shape (C, V)
    fingerprint: str = ""
    _vocab_index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self._vocab_index:
            self._vocab_index = {t: i for i, t in enumerate(self.vocabulary)}
        if not self.fingerprint:
            self.fingerprint = digest_of(self._body())

    def _body(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "concerns": self.concerns,
            "vocabulary": self.vocabulary,
            "alpha": self.alpha,
            "log_prior_pos": self.log_prior_pos.tolist(),
            "log_prior_neg": self.log_prior_neg.tolist(),
            "log_likelihood_pos": self.log_likelihood_pos.tolist(),
            "log_likelihood_neg": self.log_likelihood_neg.tolist(),
        }


def fit_model(corpus: TrainingCorpus, alpha: float = DEFAULT_ALPHA) -> ClassifierModel:
    """Fit one-vs-rest NB parameters on every document of the corpus."""
    corpus.validate()
    if alpha <= 0:
        raise TrainingError(f"smoothing alpha must be positive, got {alpha}")

    concerns = list(corpus.concerns)
    vocabulary = sorted({t for docs in corpus.documents.values() for d in docs for t in d.tokens})
    vocab_index = {t: i for i, t in enumerate(vocabulary)}
    n_concerns, n_vocab = len(concerns), len(vocabulary)

    pos_counts = np.zeros((n_concerns, n_vocab), dtype=np.float64)
    doc_counts = np.zeros(n_concerns, dtype=np.float64)
    for ci, concern in enumerate(concerns):
        for bag in corpus.documents[concern]:
            doc_counts[ci] += 1
            for token, count in bag.tokens.items():
                pos_counts[ci, vocab_index[token]] += count

    total_counts = pos_counts.sum(axis=0)
    neg_counts = total_counts[np.newaxis, :] - pos_counts
    pos_totals = pos_counts.sum(axis=1)
    neg_totals = neg_counts.sum(axis=1)

    total_docs = doc_counts.sum()
    log_prior_pos = np.log(doc_counts) - math.log(total_docs)
    log_prior_neg = np.log(total_docs - doc_counts) - math.log(total_docs)

    if n_vocab:
        log_likelihood_pos = np.log(pos_counts + alpha) - np.log(pos_totals + alpha * n_vocab)[:, np.newaxis]
        log_likelihood_neg = np.log(neg_counts + alpha) - np.log(neg_totals + alpha * n_vocab)[:, np.newaxis]
    else:
        log_likelihood_pos = np.zeros((n_concerns, 0), dtype=np.float64)
        log_likelihood_neg = np.zeros((n_concerns, 0), dtype=np.float64)

    return ClassifierModel(
        concerns=concerns,
        vocabulary=vocabulary,
        alpha=alpha,
        log_prior_pos=log_prior_pos,
        log_prior_neg=log_prior_neg,
        log_likelihood_pos=log_likelihood_pos,
        log_likelihood_neg=log_likelihood_neg,
    )


def affinity_vector(model: ClassifierModel, doc: TokenBag) -> list[float]:
    """Per-concern posterior positive probabilities for one document.

    Computed in log space; tokens outside the vocabulary are ignored, so an
    empty or fully-unknown document scores each concern's prior.
    """
    pairs = sorted(
        (model._vocab_index[t], c) for t, c in doc.tokens.items() if t in model._vocab_index
    )
    if pairs:
        idx = np.fromiter((i for i, _ in pairs), dtype=np.intp, count=len(pairs))
        cnt = np.fromiter((c for _, c in pairs), dtype=np.float64, count=len(pairs))
        score_pos = model.log_prior_pos + model.log_likelihood_pos[:, idx] @ cnt
        score_neg = model.log_prior_neg + model.log_likelihood_neg[:, idx] @ cnt
    else:
        score_pos = model.log_prior_pos
        score_neg = model.log_prior_neg
    posteriors = np.exp(score_pos - np.logaddexp(score_pos, score_neg))
    return [float(p) for p in posteriors]


def predict(model: ClassifierModel, doc: TokenBag) -> str:
    """Single-label prediction: argmax affinity, ties to the earlier concern."""
    affinities = affinity_vector(model, doc)
    return model.concerns[int(np.argmax(affinities))]


# --- candidate evaluation ---------------------------------------------------

@dataclass
class ConfusionMatrix:
    """Rows are true labels of the test documents, columns predicted labels."""

    labels: list[str]
    counts: list[list[int]]

    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def accuracy(self) -> float:
        total = self.total()
        if total == 0:
            return 0.0
        return sum(self.counts[i][i] for i in range(len(self.labels))) / total

    def render(self) -> str:
        width = max(len(label) for label in self.labels) + 2
        lines = [" " * width + "".join(f"{label:>{width}}" for label in self.labels)]
        for label, row in zip(self.labels, self.counts):
            lines.append(f"{label:>{width}}" + "".join(f"{n:>{width}}" for n in row))
        return "\n".join(lines)


@dataclass
class CandidateReport:
    candidate_id: str
    matrix: ConfusionMatrix
    accuracy: float
    split_seed: int


def _split_corpus(
    corpus: TrainingCorpus, split_seed: int, holdout_fraction: float
) -> tuple[TrainingCorpus, list[tuple[str, TokenBag]]]:
    """Pooled, seeded hold-out split: (training corpus, held-out labeled docs)."""
    if not 0.0 < holdout_fraction < 1.0:
        raise TrainingError(f"holdout fraction must be in (0,1), got {holdout_fraction}")
    pool = [(concern, doc) for concern in corpus.concerns for doc in corpus.documents[concern]]
    rng = random.Random(split_seed)
    order = list(range(len(pool)))
    rng.shuffle(order)
    n_holdout = max(1, int(len(pool) * holdout_fraction))
    holdout_ids = set(order[:n_holdout])

    train_docs: dict[str, list[TokenBag]] = {c: [] for c in corpus.concerns}
    heldout: list[tuple[str, TokenBag]] = []
    for i, (concern, doc) in enumerate(pool):
        if i in holdout_ids:
            heldout.append((concern, doc))
        else:
            train_docs[concern].append(doc)

    starved = [c for c in corpus.concerns if not train_docs[c]]
    if starved:
        raise DegenerateSplitError(
            f"split seed {split_seed} left concern(s) without training documents: "
            + ", ".join(starved)
        )
    return TrainingCorpus(concerns=list(corpus.concerns), documents=train_docs), heldout


def train_candidate(
    corpus: TrainingCorpus,
    split_seed: int,
    holdout_fraction: float = DEFAULT_HOLDOUT_FRACTION,
    alpha: float = DEFAULT_ALPHA,
) -> tuple[ClassifierModel, CandidateReport]:
    """Train on a seeded hold-out split and score the held-out documents."""
    train_corpus, heldout = _split_corpus(corpus, split_seed, holdout_fraction)
    model = fit_model(train_corpus, alpha=alpha)

    index = {c: i for i, c in enumerate(corpus.concerns)}
    counts = [[0] * len(corpus.concerns) for _ in corpus.concerns]
    for true_label, doc in heldout:
        predicted = predict(model, doc)
        counts[index[true_label]][index[predicted]] += 1
    matrix = ConfusionMatrix(labels=list(corpus.concerns), counts=counts)
    report = CandidateReport(
        candidate_id=f"trial-{split_seed}",
        matrix=matrix,
        accuracy=matrix.accuracy(),
        split_seed=split_seed,
    )
    return model, report


def select_best(candidates: list[CandidateReport]) -> str:
    """Best accuracy wins; ties go to the smallest split seed, then the id."""
    if not candidates:
        raise TrainingError("no classifier candidates to select from")
    best = min(candidates, key=lambda r: (-r.accuracy, r.split_seed, r.candidate_id))
    return best.candidate_id


def train_and_select(
    corpus: TrainingCorpus,
    n_candidates: int = DEFAULT_N_CANDIDATES,
    base_seed: int = 0,
    holdout_fraction: float = DEFAULT_HOLDOUT_FRACTION,
    alpha: float = DEFAULT_ALPHA,
) -> tuple[ClassifierModel, list[CandidateReport]]:
    """Train candidates over seeds base_seed..base_seed+n-1, pick the best,
    then retrain the winning configuration on the full corpus."""
    if n_candidates < 1:
        raise TrainingError("need at least one candidate")
    reports: list[CandidateReport] = []
    failures: list[str] = []
    for seed in range(base_seed, base_seed + n_candidates):
        try:
            _, report = train_candidate(corpus, seed, holdout_fraction, alpha)
        except DegenerateSplitError as exc:
            failures.append(str(exc))
            continue
        reports.append(report)
    if not reports:
        raise TrainingError(
            "every candidate split failed:\n" + "\n".join(failures)
        )
    select_best(reports)  # validates non-empty; winner config == full-corpus retrain
    final_model = fit_model(corpus, alpha=alpha)
    return final_model, reports


# --- persistence ------------------------------------------------------------

def save_model(model: ClassifierModel) -> bytes:
    payload = dict(model._body())
    payload["fingerprint"] = model.fingerprint
    return canonical_json_bytes(payload) + b"\n"


def load_model(data: bytes) -> ClassifierModel:
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"malformed model payload: {exc}") from exc
    if not isinstance(payload, dict) or "format" not in payload:
        raise ModelFormatError("malformed model payload: missing format marker")
    if payload["format"] != MODEL_FORMAT:
        raise ModelFormatError(
            f"unsupported model format {payload['format']!r}; this build reads {MODEL_FORMAT!r}"
        )
    try:
        model = ClassifierModel(
            concerns=list(payload["concerns"]),
            vocabulary=list(payload["vocabulary"]),
            alpha=float(payload["alpha"]),
            log_prior_pos=np.asarray(payload["log_prior_pos"], dtype=np.float64),
            log_prior_neg=np.asarray(payload["log_prior_neg"], dtype=np.float64),
            log_likelihood_pos=np.asarray(payload["log_likelihood_pos"], dtype=np.float64).reshape(
                len(payload["concerns"]), len(payload["vocabulary"])
            ),
            log_likelihood_neg=np.asarray(payload["log_likelihood_neg"], dtype=np.float64).reshape(
                len(payload["concerns"]), len(payload["vocabulary"])
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model payload: {exc}") from exc
    stored = payload.get("fingerprint")
    if stored != model.fingerprint:
        raise ModelFormatError(
            f"model fingerprint mismatch: payload says {stored}, content hashes to {model.fingerprint}"
        )
    return model


def render_candidate_report(reports: list[CandidateReport], winner_id: str) -> str:
    """Selection summary: per-candidate confusion matrix plus accuracy."""
    lines: list[str] = []
    for report in reports:
        lines.append(f"candidate {report.candidate_id} (split seed {report.split_seed})")
        lines.append(report.matrix.render())
        lines.append(f"accuracy: {report.accuracy:.4f}")
        lines.append("")
    lines.append(f"selected: {winner_id}")
    return "\n".join(lines) + "\n"


def model_fingerprint_of_bytes(data: bytes) -> str:
    """Digest of a serialized model file, for quick identity checks."""
    return sha256_hex(data)

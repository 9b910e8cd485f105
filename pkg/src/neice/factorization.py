"""Frobenius NMF by multiplicative updates, and top-word extraction.

The factor order follows M ~ H W with H documents x topics and W topics x
terms; each row of W is one topic.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import svds

from .errors import NumericalError

logger = logging.getLogger(__name__)

EPS = 1e-10
# above this many cells the residual is evaluated through the trace identity
DENSE_LOSS_LIMIT = 10_000_000


@dataclass
class TopicModel:
    W: np.ndarray
    H: np.ndarray
    K: int
    loss_trace: list
    seed: int = 0
    init: str = "nndsvda"
    n_iter: int = 0

    @property
    def final_loss(self):
        return self.loss_trace[-1]


@dataclass
class TopicSummary:
    topic_id: int
    top_terms: list = field(default_factory=list)   # [(term, weight), ...]

    @property
    def terms(self):
        return [t for t, _ in self.top_terms]


def _svd(M, K):
    if min(M.shape) <= K or M.shape[0] * M.shape[1] <= DENSE_LOSS_LIMIT:
        dense = M.toarray() if sp.issparse(M) else np.asarray(M)
        U, S, Vt = np.linalg.svd(dense, full_matrices=False)
        return U[:, :K], S[:K], Vt[:K]
    v0 = np.full(min(M.shape), 1.0 / np.sqrt(min(M.shape)))
    U, S, Vt = svds(M, k=K, v0=v0, solver="arpack")
    order = np.argsort(S)[::-1]
    return U[:, order], S[order], Vt[order]


def nndsvd_init(M, K):
    """Nonnegative double SVD; zeros are filled with the mean of M.

    Sign choices depend only on norms of positive and negative parts, so
    permuting the rows of M permutes the rows of H and leaves W unchanged.
    """
    U, S, Vt = _svd(M, K)
    H = np.zeros((M.shape[0], K))
    W = np.zeros((K, M.shape[1]))
    H[:, 0] = np.sqrt(S[0]) * np.abs(U[:, 0])
    W[0] = np.sqrt(S[0]) * np.abs(Vt[0])
    for j in range(1, K):
        x, y = U[:, j], Vt[j]
        xp, xn = np.maximum(x, 0), np.maximum(-x, 0)
        yp, yn = np.maximum(y, 0), np.maximum(-y, 0)
        nxp, nyp = np.linalg.norm(xp), np.linalg.norm(yp)
        nxn, nyn = np.linalg.norm(xn), np.linalg.norm(yn)
        mp, mn = nxp * nyp, nxn * nyn
        if mp >= mn:
            u, v, sigma = xp / (nxp or 1.0), yp / (nyp or 1.0), mp
        else:
            u, v, sigma = xn / (nxn or 1.0), yn / (nyn or 1.0), mn
        scale = np.sqrt(S[j] * sigma)
        H[:, j] = scale * u
        W[j] = scale * v
    avg = M.sum() / (M.shape[0] * M.shape[1])
    H[H < EPS] = avg
    W[W < EPS] = avg
    return H, W


def random_init(M, K, seed):
    rng = np.random.default_rng(seed)
    avg = np.sqrt(M.sum() / (M.shape[0] * M.shape[1]) / K)
    H = avg * rng.random((M.shape[0], K))
    W = avg * rng.random((K, M.shape[1]))
    return H, W


def frobenius_loss(M, H, W, norm_sq=None):
    """||M - HW||_F^2."""
    if M.shape[0] * M.shape[1] <= DENSE_LOSS_LIMIT:
        dense = M.toarray() if sp.issparse(M) else np.asarray(M)
        R = dense - H @ W
        return float(np.sum(R * R))
    if norm_sq is None:
        norm_sq = float(M.multiply(M).sum()) if sp.issparse(M) else float(np.sum(M * M))
    HtM = np.asarray((M.T @ H).T)
    cross = float(np.sum(HtM * W))
    quad = float(np.sum((H.T @ H) * (W @ W.T)))
    return max(norm_sq - 2.0 * cross + quad, 0.0)


def nmf(M, K: int, max_iter: int = 300, tol: float = 1e-5, seed: int = 0,
        init="nndsvda") -> TopicModel:
    """Factorize M >= 0 as H W minimizing the squared Frobenius error.

    ``init`` is "nndsvda", "random", or a ``(H0, W0)`` pair. Iteration stops
    after ``max_iter`` sweeps or once the relative loss improvement falls
    below ``tol``. Entries are clamped at 1e-10 to keep multiplicative updates
    from locking at zero.
    """
    M = sp.csr_matrix(M, dtype=np.float64) if sp.issparse(M) else np.asarray(M, dtype=np.float64)
    n_docs, n_terms = M.shape
    if not 1 <= K <= min(n_docs, n_terms):
        raise ValueError(f"K={K} outside [1, {min(n_docs, n_terms)}]")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    data = M.data if sp.issparse(M) else M
    if data.size and data.min() < 0:
        raise ValueError("NMF input must be nonnegative")
    if not np.any(data):
        raise ValueError("NMF input is all zero")

    if isinstance(init, tuple):
        H, W = (np.array(x, dtype=np.float64) for x in init)
        init_name = "custom"
        if H.shape != (n_docs, K) or W.shape != (K, n_terms):
            raise ValueError("initial factors have the wrong shape")
    elif init == "nndsvda":
        try:
            H, W = nndsvd_init(M, K)
            init_name = init
        except (np.linalg.LinAlgError, ArithmeticError) as exc:
            logger.warning("SVD init failed (%s), using seeded random init", exc)
            H, W = random_init(M, K, seed)
            init_name = "random"
    elif init == "random":
        H, W = random_init(M, K, seed)
        init_name = init
    else:
        raise ValueError(f"unknown init {init!r}")
    H = np.maximum(H, EPS)
    W = np.maximum(W, EPS)

    norm_sq = float(M.multiply(M).sum()) if sp.issparse(M) else float(np.sum(M * M))
    trace = [frobenius_loss(M, H, W, norm_sq)]
    it = 0
    for it in range(1, max_iter + 1):
        HtM = np.asarray((M.T @ H).T)
        W *= HtM / np.maximum((H.T @ H) @ W, np.finfo(float).tiny)
        np.maximum(W, EPS, out=W)
        MWt = np.asarray(M @ W.T)
        H *= MWt / np.maximum(H @ (W @ W.T), np.finfo(float).tiny)
        np.maximum(H, EPS, out=H)
        loss = frobenius_loss(M, H, W, norm_sq)
        prev = trace[-1]
        trace.append(loss)
        if not np.isfinite(loss):
            raise NumericalError(f"NMF diverged at iteration {it}")
        if prev == 0 or (prev - loss) / prev < tol:
            break
    if not (np.all(np.isfinite(W)) and np.all(np.isfinite(H))):
        raise NumericalError("NMF produced non-finite factors")
    logger.info("nmf K=%d: %d iterations, loss %.6g -> %.6g", K, it, trace[0], trace[-1])
    return TopicModel(W=W, H=H, K=K, loss_trace=trace, seed=seed,
                      init=init_name, n_iter=it)


def top_words(model: TopicModel, terms, T: int = 10) -> list:
    """T highest-weighted terms per topic; ties go to the smaller term."""
    if T < 1:
        raise ValueError("T must be >= 1")
    terms = list(terms)
    if len(terms) != model.W.shape[1]:
        raise ValueError("term list does not match W")
    # rank of each term in lexicographic order, used as secondary key
    lex_rank = np.empty(len(terms), dtype=np.int64)
    lex_rank[np.argsort(np.array(terms, dtype=object), kind="stable")] = np.arange(len(terms))
    out = []
    for k, row in enumerate(model.W):
        order = np.lexsort((lex_rank, -row))[:T]
        out.append(TopicSummary(k, [(terms[i], float(row[i])) for i in order]))
    return out


def _write_matrix(path, X):
    X = np.ascontiguousarray(X, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(np.array(X.shape, dtype="<u8").tobytes())
        fh.write(X.tobytes())


def _read_matrix(path):
    with open(path, "rb") as fh:
        rows, cols = np.frombuffer(fh.read(16), dtype="<u8")
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(int(rows), int(cols)).copy()


def save_model(model: TopicModel, directory):
    """Write W.bin, H.bin (u64 rows, u64 cols, then f64 LE row-major) and
    manifest.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_matrix(directory / "W.bin", model.W)
    _write_matrix(directory / "H.bin", model.H)
    manifest = {"K": model.K, "seed": model.seed, "init": model.init,
                "iterations": model.n_iter, "final_loss": model.final_loss,
                "loss_trace": model.loss_trace}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_model(directory) -> TopicModel:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    return TopicModel(W=_read_matrix(directory / "W.bin"),
                      H=_read_matrix(directory / "H.bin"),
                      K=manifest["K"], loss_trace=manifest["loss_trace"],
                      seed=manifest["seed"], init=manifest["init"],
                      n_iter=manifest["iterations"])

"""Synthetic digit glyphs: rendering, dataset files, nearest-neighbour labels."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

HEIGHT = WIDTH = 16
SPLITS = {"train": 1, "test": 2}

# 5x7 bitmap font, rows top to bottom
FONT = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    3: ("01110", "10001", "00001", "00110", "00001", "10001", "01110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}


def canonical(digit: int) -> np.ndarray:
    """Noise-free glyph: the font bitmap scaled 2x and centred in 16x16."""
    bits = np.array([[c == "1" for c in row] for row in FONT[digit]], dtype=np.float64)
    big = np.kron(bits, np.ones((2, 2)))  # 14 x 10
    out = np.zeros((HEIGHT, WIDTH))
    top = (HEIGHT - big.shape[0]) // 2
    left = (WIDTH - big.shape[1]) // 2
    out[top:top + big.shape[0], left:left + big.shape[1]] = big
    return out


def shift(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Translate with zero fill."""
    out = np.zeros_like(img)
    h, w = img.shape
    ys, yd = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs, xd = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    out[yd, xd] = img[ys, xs]
    return out


def render(digit: int, rng: np.random.Generator | None = None, *, noise: float = 0.1,
           max_shift: int = 2, jitter: tuple = (0.8, 1.2)) -> np.ndarray:
    """One glyph instance.  With ``rng=None`` the canonical rendering is returned."""
    img = canonical(digit)
    if rng is None:
        return img
    dy, dx = rng.integers(-max_shift, max_shift + 1, size=2)
    scale = rng.uniform(*jitter)
    img = shift(img, int(dy), int(dx)) * scale
    if noise > 0:
        img = img + rng.normal(0.0, noise, size=img.shape)
    return np.clip(img, 0.0, 1.0)


@dataclass
class GlyphDataset:
    images: np.ndarray  # (N, H, W)
    labels: np.ndarray  # (N,)
    split: str = "train"
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i):
        return self.images[i], int(self.labels[i])

    @property
    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self.images), -1)


def instance_rng(seed: int, split: str, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, SPLITS[split], index])


def generate_dataset(n: int, split: str = "train", seed: int = 0, **render_opts) -> GlyphDataset:
    """``n`` glyphs; instance ``i`` depends only on ``(seed, split, i)``."""
    if n <= 0:
        raise ValueError("dataset size must be positive")
    if split not in SPLITS:
        raise ValueError(f"split must be one of {sorted(SPLITS)}")
    images = np.empty((n, HEIGHT, WIDTH))
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        rng = instance_rng(seed, split, i)
        labels[i] = rng.integers(0, 10)
        images[i] = render(int(labels[i]), rng, **render_opts)
    return GlyphDataset(images, labels, split, seed)


# --- files ----------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_dataset(ds: GlyphDataset, path) -> None:
    n, h, w = ds.images.shape
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"glyphs v1 {h} {w} {n}\n")
        for img, lab in zip(ds.images, ds.labels):
            f.write(str(int(lab)) + " " + " ".join(_fmt(x) for x in img.ravel()) + "\n")


def load_dataset(path, split: str = "train") -> GlyphDataset:
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 5 or header[:2] != ["glyphs", "v1"]:
            raise ValueError(f"{path}: not a glyph dataset (bad header)")
        h, w, n = (int(x) for x in header[2:])
        images = np.empty((n, h, w))
        labels = np.empty(n, dtype=np.int64)
        for i in range(n):
            parts = f.readline().split()
            if len(parts) != 1 + h * w:
                raise ValueError(f"{path}: line {i + 2} has {len(parts)} fields, expected {1 + h * w}")
            labels[i] = int(parts[0])
            images[i] = np.array(parts[1:], dtype=np.float64).reshape(h, w)
    return GlyphDataset(images, labels, split)


def write_pgm(path, img) -> None:
    """Binary 8-bit graymap with pixel = round(255 * value)."""
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    h, w = arr.shape
    data = np.rint(arr * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a P5 graymap as floats in [0, 1]."""
    with open(path, "rb") as f:
        raw = f.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated graymap header")
        fields.append(raw[start:pos])
    if fields[0] != b"P5":
        raise ValueError(f"{path}: only binary P5 graymaps are supported")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if not 0 < maxval < 256:
        raise ValueError(f"{path}: unsupported maximum value {maxval}")
    pos += 1
    data = np.frombuffer(raw[pos:pos + w * h], dtype=np.uint8)
    if data.size != w * h:
        raise ValueError(f"{path}: truncated pixel data")
    return data.reshape(h, w).astype(np.float64) / maxval


# --- labelling and metrics -----------------------------------------------------


def nearest_index(images, train: GlyphDataset) -> np.ndarray:
    """Index of the MSE-closest training glyph for each image (lowest index on ties)."""
    if len(train) == 0:
        raise ValueError("nearest-neighbour lookup on an empty dataset")
    t = train.flat
    x = np.asarray(images, dtype=np.float64).reshape(-1, t.shape[1])
    return np.array([int(np.argmin(((t - row) ** 2).mean(axis=1))) for row in x], dtype=np.intp)


def nearest_label(image, train: GlyphDataset) -> int:
    """Label of the training glyph with the smallest mean squared error."""
    return int(train.labels[nearest_index(image, train)[0]])


def nearest_labels(images, train: GlyphDataset) -> np.ndarray:
    return train.labels[nearest_index(images, train)]


def generative_accuracy(answers, train: GlyphDataset, task: str = "digit") -> float:
    """Fraction of generated answers whose recovered labels satisfy the task.

    ``answers`` items: for ``digit``, ``(image, digit)``; for ``add``,
    ``((image1, image2), target_sum)``; for ``multi_add``,
    ``(images, labels, target)`` where ``images`` maps list positions to
    generated images and ``labels`` are the two digit lists with the
    known digits filled in.
    """
    answers = list(answers)
    if not answers:
        return 0.0
    ok = 0
    for ans in answers:
        if task == "digit":
            img, d = ans
            ok += nearest_label(img, train) == d
        elif task == "add":
            (a, b), s = ans
            ok += nearest_label(a, train) + nearest_label(b, train) == s
        elif task == "multi_add":
            gen, digits, target = ans
            a, b = [list(x) for x in digits]
            for (which, pos), img in gen.items():
                (a if which == 0 else b)[pos] = nearest_label(img, train)
            ok += digits_value(a) + digits_value(b) == target
        else:
            raise ValueError(f"unknown task {task!r}")
    return ok / len(answers)


def digits_value(ds) -> int:
    v = 0
    for d in ds:
        v = 10 * v + int(d)
    return v


@dataclass
class MaskedAdditionQuery:
    """Two digit-image lists with some positions masked, and their sum.

    ``images[k][i]`` is ``None`` where masked.  ``masked`` lists
    ``(list index, position)`` pairs.
    """

    images: tuple
    digits: tuple
    target: int
    masked: tuple

    def __post_init__(self):
        a, b = self.digits
        if digits_value(a) + digits_value(b) != self.target:
            raise ValueError("ground-truth digits do not satisfy the sum")


def make_masked_queries(n: int, seed: int = 0, test: GlyphDataset | None = None,
                        masked: int = 4, width: int = 4) -> list[MaskedAdditionQuery]:
    """Random ``width``-digit additions with ``masked`` of the digit images hidden."""
    if n <= 0:
        raise ValueError("query count must be positive")
    rng = np.random.default_rng([seed, 0xadd])
    by_label = None
    if test is not None:
        by_label = {d: np.flatnonzero(test.labels == d) for d in range(10)}
    out = []
    for _ in range(n):
        lo, hi = 10 ** (width - 1), 10 ** width
        nums = [int(rng.integers(lo, hi)) for _ in range(2)]
        digits = tuple(tuple(int(c) for c in str(x)) for x in nums)
        slots = [(k, i) for k in range(2) for i in range(width)]
        pick = rng.choice(len(slots), size=masked, replace=False)
        hidden = tuple(sorted(slots[p] for p in pick))
        images = []
        for k in range(2):
            row = []
            for i, d in enumerate(digits[k]):
                if (k, i) in hidden or by_label is None:
                    row.append(None)
                else:
                    row.append(test.images[int(rng.choice(by_label[d]))])
            images.append(tuple(row))
        out.append(MaskedAdditionQuery(tuple(images), digits, sum(nums), hidden))
    return out


def random_guess_rate(query: MaskedAdditionQuery) -> float:
    """Probability that uniformly random digits in the masked slots satisfy the sum."""
    a, b = [list(x) for x in query.digits]
    hits = 0
    total = 0
    for guess in itertools.product(range(10), repeat=len(query.masked)):
        for (k, i), g in zip(query.masked, guess):
            (a if k == 0 else b)[i] = g
        total += 1
        hits += digits_value(a) + digits_value(b) == query.target
    return hits / total


__all__ = [
    "FONT", "GlyphDataset", "MaskedAdditionQuery", "canonical", "digits_value",
    "generate_dataset", "generative_accuracy", "load_dataset", "make_masked_queries",
    "nearest_index", "nearest_label", "nearest_labels", "random_guess_rate", "read_pgm",
    "render", "save_dataset", "shift", "write_pgm",
]

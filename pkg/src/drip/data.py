"""CSV ingestion with train-only scaling, plus synthetic dataset generators.

Datasets carry an encoded feature matrix (numerics min-max scaled on the
training split, categoricals one-hot), the private column, an optional public
column, and the deterministic train/test split. Generators cover correlated
Gaussian pairs, sampled discrete joints, Gaussian blobs, and a credit-style
tabular dataset with tunable age/risk signal strength.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .numerics import RandomSource

KINDS = ("numeric", "categorical")


class IngestError(ValueError):
    """A cell failed to parse; the message carries row/column coordinates."""


def parse_schema(text: str) -> list[tuple[str, str]]:
    """One `name:kind` per line; blank lines and #-comments ignored."""
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise IngestError(f"schema line {lineno}: expected name:kind, got {line!r}")
        name, kind = (part.strip() for part in line.split(":", 1))
        if kind not in KINDS:
            raise IngestError(f"schema line {lineno}: unknown kind {kind!r}")
        out.append((name, kind))
    return out


def read_schema(path) -> list[tuple[str, str]]:
    with open(path) as fh:
        return parse_schema(fh.read())


def write_schema(path, names, kinds) -> None:
    with open(path, "w") as fh:
        for name, kind in zip(names, kinds):
            fh.write(f"{name}:{kind}\n")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


@dataclass
class NumericScaler:
    lo: float
    hi: float

    def transform(self, v: np.ndarray) -> np.ndarray:
        if self.hi <= self.lo:
            return np.zeros_like(v)
        return (v - self.lo) / (self.hi - self.lo)

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return x * (self.hi - self.lo) + self.lo


@dataclass
class Dataset:
    names: list[str]
    kinds: list[str]
    private: str
    public: str | None
    feature_names: list[str]
    x: np.ndarray  # (N, D) encoded features
    s: np.ndarray  # (N,)
    u: np.ndarray | None
    train_idx: np.ndarray
    test_idx: np.ndarray
    encoders: dict = field(default_factory=dict)  # column -> scaler or category list
    seed: int = 0

    @property
    def feature_columns(self) -> list[str]:
        return [n for n in self.names if n not in (self.private, self.public)]

    def split(self, which: str):
        idx = self.train_idx if which == "train" else self.test_idx
        return self.x[idx], self.s[idx], None if self.u is None else self.u[idx]


def _parse_cell(cell: str, kind: str, row: int, col: str):
    cell = cell.strip()
    if cell == "":
        raise IngestError(f"row {row}, column {col!r}: missing value")
    if kind == "numeric":
        try:
            return float(cell)
        except ValueError:
            raise IngestError(f"row {row}, column {col!r}: unparseable numeric {cell!r}") from None
    return cell


def ingest_csv(
    path,
    schema: list[tuple[str, str]],
    private: str,
    public: str | None = None,
    seed: int = 0,
    train_fraction: float = 0.8,
) -> Dataset:
    """Parse, split deterministically by seed, then fit encoders on train only.

    Numeric columns are min-max scaled with parameters fit on the training
    rows; categoricals are one-hot with the category list fit on training rows
    (an unseen test category is an error naming its coordinates). The private
    (and optional public) column is encoded the same way but kept separate:
    scaled values for numeric, integer codes for categorical.
    """
    kinds = dict(schema)
    names = [n for n, _ in schema]
    if private not in kinds:
        raise IngestError(f"private column {private!r} not in schema")
    if public is not None and public not in kinds:
        raise IngestError(f"public column {public!r} not in schema")

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError("empty file: no header row") from None
        raw_rows = list(reader)
    header = [h.strip() for h in header]
    if header != names:
        raise IngestError(f"header {header} does not match schema columns {names}")
    if not raw_rows:
        raise IngestError("no data rows")

    parsed: dict[str, list] = {n: [] for n in names}
    for r, row in enumerate(raw_rows, start=2):  # header is line 1
        if len(row) != len(names):
            raise IngestError(f"row {r}: expected {len(names)} cells, got {len(row)}")
        for name, cell in zip(names, row):
            parsed[name].append(_parse_cell(cell, kinds[name], r, name))

    n = len(raw_rows)
    perm = RandomSource(seed).gen.permutation(n)
    n_train = int(round(train_fraction * n))
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])

    encoders: dict = {}
    feature_names: list[str] = []
    feature_cols: list[np.ndarray] = []

    def encode(name: str, as_feature: bool):
        kind = kinds[name]
        values = parsed[name]
        if kind == "numeric":
            arr = np.asarray(values, dtype=float)
            train_vals = arr[train_idx]
            scaler = NumericScaler(float(train_vals.min()), float(train_vals.max()))
            encoders[name] = scaler
            col = scaler.transform(arr)
            if as_feature:
                feature_names.append(name)
                feature_cols.append(col)
            return col
        cats = sorted({values[i] for i in train_idx})
        index = {c: i for i, c in enumerate(cats)}
        encoders[name] = cats
        codes = np.empty(n)
        for i, v in enumerate(values):
            if v not in index:
                raise IngestError(
                    f"row {i + 2}, column {name!r}: category {v!r} unseen in training split"
                )
            codes[i] = index[v]
        if as_feature:
            onehot = np.zeros((n, len(cats)))
            onehot[np.arange(n), codes.astype(int)] = 1.0
            for j, c in enumerate(cats):
                feature_names.append(f"{name}={c}")
                feature_cols.append(onehot[:, j])
        return codes

    s_col = u_col = None
    for name in names:
        if name == private:
            s_col = encode(name, as_feature=False)
        elif public is not None and name == public:
            u_col = encode(name, as_feature=False)
        else:
            encode(name, as_feature=True)

    return Dataset(
        names=names,
        kinds=[kinds[n] for n in names],
        private=private,
        public=public,
        feature_names=feature_names,
        x=np.column_stack(feature_cols),
        s=s_col,
        u=u_col,
        train_idx=train_idx,
        test_idx=test_idx,
        encoders=encoders,
        seed=seed,
    )


def decode_features(ds: Dataset, x: np.ndarray) -> list[list[str]]:
    """Encoded feature rows -> original-unit cells (argmax for one-hot blocks)."""
    rows = []
    for i in range(x.shape[0]):
        row = []
        pos = 0
        for name in ds.feature_columns:
            enc = ds.encoders[name]
            if isinstance(enc, NumericScaler):
                row.append(repr(float(enc.inverse(x[i, pos]))))
                pos += 1
            else:
                width = len(enc)
                row.append(enc[int(np.argmax(x[i, pos : pos + width]))])
                pos += width
        rows.append(row)
    return rows


def emit_sanitized_csv(ds: Dataset, x_sanitized: np.ndarray, parsed_rows: list[list[str]], path) -> None:
    """Write a drop-in CSV: original header, sanitized features decoded to
    original units, private/public cells copied through from the source rows."""
    feature_rows = decode_features(ds, x_sanitized)
    out_rows = []
    for i, src in enumerate(parsed_rows):
        fi = iter(feature_rows[i])
        out = []
        for j, name in enumerate(ds.names):
            if name == ds.private or name == ds.public:
                out.append(src[j])
            else:
                out.append(next(fi))
        out_rows.append(out)
    write_csv(path, ds.names, out_rows)


def read_rows(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return [h.strip() for h in header], list(reader)


# ---------------------------------------------------------------------------
# synthetic generators: each returns (names, kinds, rows-of-strings)

def synth_gaussian_pair(rng: RandomSource, r: float, n: int):
    from .oracle import gaussian_pair_dataset

    pair = gaussian_pair_dataset(rng, r, n)
    rows = [[repr(float(a)), repr(float(b))] for a, b in pair]
    return ["x", "s"], ["numeric", "numeric"], rows


def synth_discrete_joint(rng: RandomSource, pmf, n: int):
    from .oracle import DiscreteJoint, sample_discrete_joint

    joint = DiscreteJoint(np.asarray(pmf, dtype=float))
    pairs = sample_discrete_joint(rng, joint, n)
    rows = [[str(int(a)), str(int(b))] for a, b in pairs]
    return ["x", "s"], ["numeric", "categorical"], rows


def synth_blobs(
    rng: RandomSource,
    n: int,
    centers: int = 2,
    dim: int = 2,
    spread: float = 0.5,
    label_mode: str = "blob",
):
    """Gaussian blobs; s is the blob label, or an independent coin with
    label_mode='random' (features then carry no information about s)."""
    if label_mode not in ("blob", "random"):
        raise ValueError(f"unknown label_mode {label_mode!r}")
    centers_xy = rng.gen.uniform(0, 4, size=(centers, dim))
    blob = rng.gen.integers(0, centers, size=n)
    x = centers_xy[blob] + spread * rng.gen.standard_normal((n, dim))
    if label_mode == "random":
        # balanced and independent of x: a shuffled round-robin assignment
        s = rng.gen.permutation(np.arange(n) % centers)
    else:
        s = blob
    names = [f"f{j}" for j in range(dim)] + ["s"]
    kinds = ["numeric"] * dim + ["categorical"]
    rows = [
        [repr(float(v)) for v in x[i]] + [f"c{s[i]}"]
        for i in range(n)
    ]
    return names, kinds, rows


# ---------------------------------------------------------------------------
# credit-style generator

CREDIT_COLUMNS: list[tuple[str, str]] = [
    ("checking_status", "categorical"),
    ("duration", "numeric"),
    ("credit_history", "categorical"),
    ("purpose", "categorical"),
    ("credit_amount", "numeric"),
    ("savings", "categorical"),
    ("employment", "categorical"),
    ("installment_rate", "numeric"),
    ("personal_status", "categorical"),
    ("other_debtors", "categorical"),
    ("residence_since", "numeric"),
    ("property", "categorical"),
    ("age", "numeric"),
    ("other_plans", "categorical"),
    ("housing", "categorical"),
    ("existing_credits", "numeric"),
    ("job", "categorical"),
    ("num_dependents", "numeric"),
    ("telephone", "categorical"),
    ("foreign_worker", "categorical"),
    ("credit_risk", "categorical"),
]

# (labels low->high along the cell score, target base rates, age loading,
#  risk loading). Loadings only set which direction a column sorts the grid
# cells along; values themselves are pure functions of the cell.
_CREDIT_CATS = {
    "checking_status": (["A11", "A12", "A13", "A14"], [0.27, 0.27, 0.06, 0.40], 0.1, 1.0),
    "credit_history": (["A30", "A31", "A32", "A33", "A34"], [0.04, 0.05, 0.53, 0.09, 0.29], 0.4, 0.8),
    "purpose": (
        ["A40", "A41", "A42", "A43", "A44", "A45", "A46", "A48", "A49", "A410"],
        [0.23, 0.10, 0.18, 0.28, 0.01, 0.02, 0.05, 0.01, 0.10, 0.02],
        0.7, -0.4,
    ),
    "savings": (["A61", "A62", "A63", "A64", "A65"], [0.60, 0.10, 0.06, 0.05, 0.18], 0.2, 0.9),
    "employment": (["A71", "A72", "A73", "A74", "A75"], [0.06, 0.17, 0.34, 0.17, 0.25], 1.2, 0.3),
    "personal_status": (["A92", "A91", "A93", "A94"], [0.31, 0.05, 0.55, 0.09], 0.8, -0.3),
    "other_debtors": (["A102", "A101", "A103"], [0.04, 0.91, 0.05], -0.3, 0.5),
    "property": (["A124", "A123", "A122", "A121"], [0.15, 0.33, 0.23, 0.28], 0.7, 0.6),
    "other_plans": (["A141", "A142", "A143"], [0.14, 0.05, 0.81], 0.1, 0.5),
    "housing": (["A151", "A152", "A153"], [0.18, 0.71, 0.11], 1.1, 0.2),
    "job": (["A171", "A172", "A173", "A174"], [0.02, 0.20, 0.63, 0.15], 0.3, 0.7),
    "telephone": (["A191", "A192"], [0.60, 0.40], 0.6, 0.4),
    "foreign_worker": (["A201", "A202"], [0.96, 0.04], -0.2, 0.4),
}

# grid resolution for the latent factors; categorical values are constant
# within a cell, so at most len(_A_CUTS)+1 times len(_Z_CUTS)+1 distinct
# categorical profiles appear in a table
_A_CUTS = [0.12, 0.34, 0.63, 0.86]
_Z_CUTS = [0.20, 0.45, 0.75]


def _cell_categories(cells, cell_score, counts, labels, rates, n):
    """Assign one label per grid cell so label frequencies track `rates`.

    Cells are walked in increasing score order and handed to successive
    labels once the running record count passes each rate boundary.
    """
    order = np.argsort(cell_score, kind="stable")
    bounds = np.cumsum(rates) * n
    cell_label = np.empty(len(cell_score), dtype=int)
    seen = 0.0
    for c in order:
        cell_label[c] = min(np.searchsorted(bounds, seen + counts[c] / 2.0), len(labels) - 1)
        seen += counts[c]
    return [labels[cell_label[c]] for c in cells]


def synth_credit_like(
    rng: RandomSource,
    n: int = 1000,
    age_obs_noise: float = 0.42,
    risk_obs_noise: float = 0.45,
    risk_noise: float = 1.3,
    latent_corr: float = 0.35,
    numeric_blur: float = 0.3,
    flip_fraction: float = 0.04,
    age_shape: float = 2.4,
):
    """Credit-scoring-style table: 20 attributes plus a good/bad outcome.

    An age factor and a correlated creditworthiness factor drive everything.
    The categorical attributes only see the pair through a coarse grid over
    noisy copies of the factors (age_obs_noise / risk_obs_noise set that
    blur), so records fall into a limited set of categorical profiles --
    the way real credit tables repeat common applicant types -- while the
    numeric attributes vary smoothly (numeric_blur sets their own noise).
    risk_noise adds irreducible randomness to the outcome itself and
    flip_fraction mislabels a sliver of outcomes outright.
    """
    g = rng.gen
    a = g.standard_normal(n)
    z = latent_corr * a + np.sqrt(1 - latent_corr**2) * g.standard_normal(n)
    # the noisy projections the attributes observe
    a_f = np.sqrt(1 - age_obs_noise**2) * a + age_obs_noise * g.standard_normal(n)
    z_f = np.sqrt(1 - risk_obs_noise**2) * z + risk_obs_noise * g.standard_normal(n)

    # steep latent-to-age map: ages pool at the young and old ends (a mix of
    # students and retirees), which keeps the best constant predictor weak
    age_years = 19 + np.floor(56 * _phi(age_shape * a)).astype(int)

    a_bin = np.searchsorted(ndtri(_A_CUTS), a_f, side="right")
    z_bin = np.searchsorted(ndtri(_Z_CUTS), z_f, side="right")
    n_z = len(_Z_CUTS) + 1
    cells = a_bin * n_z + z_bin
    n_cells = (len(_A_CUTS) + 1) * n_z
    counts = np.bincount(cells, minlength=n_cells).astype(float)
    sum_a = np.bincount(cells, weights=a_f, minlength=n_cells)
    sum_z = np.bincount(cells, weights=z_f, minlength=n_cells)
    mean_a = np.divide(sum_a, counts, out=np.zeros(n_cells), where=counts > 0)
    mean_z = np.divide(sum_z, counts, out=np.zeros(n_cells), where=counts > 0)

    cols: dict[str, list[str]] = {}
    for name, (labels, rates, w_a, w_z) in _CREDIT_CATS.items():
        score = w_a * mean_a + w_z * mean_z
        cols[name] = _cell_categories(cells, score, counts, labels, rates, n)

    nb = numeric_blur
    duration = np.clip(np.round(20 + 11 * (0.5 * z_f - 0.3 * a_f + nb * 0.5 * g.standard_normal(n))), 4, 72)
    amount = np.round(np.exp(7.9 + 0.55 * (0.3 * a_f - 0.35 * z_f + nb * 0.5 * g.standard_normal(n)))).astype(int)
    installment = 1 + np.clip(np.floor(2.0 + 1.0 * (-0.5 * z_f + nb * 0.8 * g.standard_normal(n))), 0, 3).astype(int)
    residence = 1 + np.clip(np.floor(2.0 + 1.3 * (0.9 * a_f + nb * 0.6 * g.standard_normal(n))), 0, 3).astype(int)
    existing = 1 + np.clip(np.floor(0.8 + 0.9 * (0.6 * a_f + 0.2 * z_f + nb * 0.7 * g.standard_normal(n))), 0, 3).astype(int)
    dependents = 1 + (0.6 * a_f + nb * 0.8 * g.standard_normal(n) > 1.1).astype(int)

    risk_score = 1.6 * z + 0.25 * a + risk_noise * g.standard_normal(n)
    bad = risk_score < np.quantile(risk_score, 0.30)
    # a sliver of feature-independent mislabeling, as in real ledgers; this
    # floors the achievable cross-entropy without moving accuracy much
    bad = bad ^ (g.random(n) < flip_fraction)
    risk = np.where(bad, "bad", "good")

    numeric = {
        "duration": duration.astype(int),
        "credit_amount": amount,
        "installment_rate": installment,
        "residence_since": residence,
        "age": age_years,
        "existing_credits": existing,
        "num_dependents": dependents,
    }
    rows = []
    for i in range(n):
        row = []
        for name, kind in CREDIT_COLUMNS:
            if name == "credit_risk":
                row.append(str(risk[i]))
            elif kind == "numeric":
                row.append(str(int(numeric[name][i])))
            else:
                row.append(cols[name][i])
        rows.append(row)
    names = [n_ for n_, _ in CREDIT_COLUMNS]
    kinds = [k for _, k in CREDIT_COLUMNS]
    return names, kinds, rows


def _phi(x: np.ndarray) -> np.ndarray:
    from scipy.special import ndtr

    return ndtr(x)


def load_german_credit(path):
    """Convert the classic space-separated german.data layout to our table.

    Expects 21 whitespace-separated fields per line (20 attributes plus the
    1/2 outcome); returns (names, kinds, rows) with the outcome mapped to
    good/bad, ready for write_csv/write_schema.
    """
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 21:
                raise IngestError(f"line {lineno}: expected 21 fields, got {len(parts)}")
            outcome = {"1": "good", "2": "bad"}.get(parts[20])
            if outcome is None:
                raise IngestError(f"line {lineno}: outcome must be 1 or 2, got {parts[20]!r}")
            # german.data column order matches CREDIT_COLUMNS
            rows.append(parts[:20] + [outcome])
    names = [n for n, _ in CREDIT_COLUMNS]
    kinds = [k for _, k in CREDIT_COLUMNS]
    return names, kinds, rows

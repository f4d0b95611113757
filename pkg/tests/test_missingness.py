import logging

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from mtimpute.dataio import Dataset, load_catalog, load_csv
from mtimpute.errors import MissingnessError, StructuralError
from mtimpute.missingness import (
    MissingnessMask,
    check_preconditions,
    choose_trigger_columns,
    column_fractions,
    fraction_ceiling,
    induce,
    missing_fraction,
    qualifying_rows,
    read_mask,
    spec_path,
    trigger_candidates,
    tune_probabilities,
    write_mask,
)
from mtimpute.models import MechanismSpec

ROLE_DATASET = Dataset(
    name="ROLES",
    columns=("a", "b", "c", "d", "e", "f"),
    roles=("permanent", "permanent", "vulnerable", "vulnerable", "vulnerable", "permanent"),
    values=np.random.default_rng(5).normal(size=(40, 6)),
)


def columns_of(dataset, role):
    return [i for i, r in enumerate(dataset.roles) if r == role]


def mar_spec(dataset, pattern="random", p_m=0.6, p_p=0.5):
    a, b = dataset.column_index("a"), dataset.column_index("b")
    return MechanismSpec(kind="MAR", pattern=pattern, p_m=p_m, p_p=p_p, trigger_columns=(a, b))


def test_missing_fraction_counting():
    assert missing_fraction(MissingnessMask.empty((5, 14))) == 0.0
    cells = np.zeros((5, 14), dtype=bool)
    cells[:, :10] = True
    assert missing_fraction(MissingnessMask(cells)) == pytest.approx(10 / 14)


def test_missing_fraction_recount(synthetic_dataset, rng):
    for kind in ("MCAR", "MAR"):
        spec = mar_spec(synthetic_dataset) if kind == "MAR" else MechanismSpec(kind="MCAR", pattern="random", p_m=0.4)
        mask = induce(synthetic_dataset, spec, rng)
        count = 0
        for i in range(mask.shape[0]):
            for j in range(mask.shape[1]):
                count += bool(mask.cells[i, j])
        assert missing_fraction(mask, synthetic_dataset) == count / (mask.shape[0] * mask.shape[1])


@settings(max_examples=30, deadline=None)
@given(
    kind=st.sampled_from(["MCAR", "MAR", "MNAR"]),
    pattern=st.sampled_from(["random", "uniform"]),
    p_m=st.floats(0.0, 1.0),
    p_p=st.floats(0.0, 1.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_induced_masks_respect_roles_patterns_and_triggers(kind, pattern, p_m, p_p, seed):
    dataset = ROLE_DATASET
    triggers = {"MCAR": None, "MAR": (0, 1), "MNAR": (2, 4)}[kind]
    spec = MechanismSpec(kind=kind, pattern=pattern, p_m=p_m, p_p=p_p, trigger_columns=triggers)
    mask = induce(dataset, spec, np.random.default_rng(seed))

    assert not mask.cells[:, columns_of(dataset, "permanent")].any()
    vulnerable = mask.cells[:, columns_of(dataset, "vulnerable")]
    if pattern == "uniform":
        assert np.all(vulnerable.all(axis=1) | ~vulnerable.any(axis=1))
    flagged = vulnerable.any(axis=1)
    assert not np.any(flagged & ~qualifying_rows(dataset, spec))


def test_structural_invariants_over_thousand_masks(synthetic_dataset):
    rng = np.random.default_rng(0)
    permanent = columns_of(synthetic_dataset, "permanent")
    spec = mar_spec(synthetic_dataset, pattern="uniform")
    allowed = qualifying_rows(synthetic_dataset, spec)
    for _ in range(1000):
        mask = induce(synthetic_dataset, spec, rng)
        assert not mask.cells[:, permanent].any()
        rows = mask.cells.any(axis=1)
        assert not np.any(rows & ~allowed)


def test_trigger_means_come_from_uncorrupted_values(synthetic_dataset, rng):
    spec = mar_spec(synthetic_dataset)
    before = qualifying_rows(synthetic_dataset, spec)
    corrupted = synthetic_dataset.corrupted(induce(synthetic_dataset, spec, rng))
    assert_array_equal(qualifying_rows(corrupted, spec), before)


def test_mcar_row_flag_rate(synthetic_dataset):
    rng = np.random.default_rng(21)
    spec = MechanismSpec(kind="MCAR", pattern="uniform", p_m=0.3)
    draws = 1000
    flagged = sum(induce(synthetic_dataset, spec, rng).cells.any(axis=1).sum() for _ in range(draws))
    trials = draws * synthetic_dataset.n_rows
    standard_error = np.sqrt(0.3 * 0.7 / trials)
    assert abs(flagged / trials - 0.3) < 3 * standard_error


def test_seeded_spec_reproduces_mask(synthetic_dataset):
    spec = MechanismSpec(kind="MCAR", pattern="random", p_m=0.5, seed=17)
    assert induce(synthetic_dataset, spec).digest() == induce(synthetic_dataset, spec).digest()


def test_preconditions(synthetic_dataset):
    with pytest.raises(MissingnessError):
        check_preconditions(synthetic_dataset, "MCAR", (0, 1))
    with pytest.raises(MissingnessError):
        check_preconditions(synthetic_dataset, "MAR", None)
    # c is vulnerable, so it cannot trigger MAR
    with pytest.raises(MissingnessError):
        check_preconditions(synthetic_dataset, "MAR", (0, 2))
    # the label-encoded category is permanent but not numeric
    with pytest.raises(MissingnessError):
        check_preconditions(synthetic_dataset, "MAR", (0, synthetic_dataset.column_index("kind")))
    check_preconditions(synthetic_dataset, "MNAR", (2, 3))


def test_no_vulnerable_columns_is_an_error(rng):
    dataset = Dataset(name="P", columns=("x", "y", "z"), roles=("permanent",) * 3, values=rng.normal(size=(10, 3)))
    with pytest.raises(MissingnessError):
        induce(dataset, MechanismSpec(kind="MCAR", pattern="random", p_m=0.5), rng)
    with pytest.raises(MissingnessError):
        tune_probabilities(dataset, "MCAR", "random", 0.1, rng=rng)


def test_mar_needs_two_numeric_permanent_columns(rng):
    dataset = Dataset(
        name="V", columns=("x", "y", "z"), roles=("permanent", "vulnerable", "vulnerable"),
        values=rng.normal(size=(10, 3)),
    )
    with pytest.raises(MissingnessError):
        tune_probabilities(dataset, "MAR", "random", 0.1, rng=rng)


def test_tune_zero_target(synthetic_dataset, rng):
    spec = tune_probabilities(synthetic_dataset, "MCAR", "random", 0.0, rng=rng)
    assert spec.p_m == 0.0
    assert not induce(synthetic_dataset, spec, rng).cells.any()


def test_tune_mcar_uniform_closed_form(large_dataset, rng):
    # expected fraction = p_m * v / c, so p_m should land near 0.16 * 6 / 3
    spec = tune_probabilities(large_dataset, "MCAR", "uniform", 0.16, rng=rng)
    assert spec.p_p == 1.0
    assert spec.p_m == pytest.approx(0.16 * 6 / 3, abs=0.03)


def test_tune_mcar_random_pins_pattern_probability(large_dataset, rng):
    spec = tune_probabilities(large_dataset, "MCAR", "random", 0.15, rng=rng)
    assert spec.p_p == 0.5
    achieved = np.mean([missing_fraction(induce(large_dataset, spec, rng)) for _ in range(50)])
    assert achieved == pytest.approx(0.15, abs=0.02)


def test_tune_raises_pattern_probability_when_rows_run_out(large_dataset, rng):
    # about a quarter of rows qualify, half the columns are vulnerable: ceiling near 0.125
    spec = tune_probabilities(large_dataset, "MAR", "random", 0.09, rng=rng)
    assert spec.p_m == 1.0
    assert spec.p_p > 0.5
    assert spec.trigger_columns is not None


def test_tune_reports_shortfall(large_dataset, rng, caplog):
    with caplog.at_level(logging.WARNING, logger="mtimpute.missingness"):
        spec = tune_probabilities(large_dataset, "MAR", "uniform", 0.4, rng=rng)
    assert spec.p_m == 1.0
    assert "short of target" in caplog.text


def test_trigger_choice_prefers_feasible_pair(large_dataset, rng):
    pair = choose_trigger_columns(large_dataset, "MNAR", 0.05, rng)
    assert fraction_ceiling(large_dataset, "MNAR", pair) >= 0.05
    assert choose_trigger_columns(large_dataset, "MCAR", 0.1, rng) is None


def test_column_fractions(synthetic_dataset, rng):
    mask = induce(synthetic_dataset, MechanismSpec(kind="MCAR", pattern="uniform", p_m=0.5), rng)
    fractions = column_fractions(mask, list(synthetic_dataset.columns))
    assert fractions["a"] == 0.0
    assert fractions["c"] == fractions["d"] == fractions["e"] > 0.0


def test_mask_files_keep_cells_and_spec(synthetic_dataset, tmp_path, rng):
    spec = mar_spec(synthetic_dataset).model_copy(update={"p_m": 0.123456789012345, "seed": 3})
    mask = induce(synthetic_dataset, spec, rng)
    path = write_mask(mask, tmp_path / "m" / "mask.csv", list(synthetic_dataset.columns), {"config_digest": "abc"})
    loaded, columns = read_mask(path)
    assert columns == list(synthetic_dataset.columns)
    assert loaded.digest() == mask.digest()
    assert loaded.spec == spec
    assert "config_digest=abc" in spec_path(path).read_text()


def test_read_mask_rejects_non_binary(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n0,2\n1,0\n")
    with pytest.raises(StructuralError):
        read_mask(path)
    with pytest.raises(StructuralError):
        read_mask(tmp_path / "absent.csv")


def test_probabilities_outside_unit_interval(synthetic_dataset):
    with pytest.raises(MissingnessError):
        tune_probabilities(synthetic_dataset, "MCAR", "random", 1.5)
    with pytest.raises(MissingnessError):
        tune_probabilities(synthetic_dataset, "MCAR", "random", 0.1, draws=5)


def test_mar_with_certain_flagging_masks_exactly_the_qualifying_rows():
    p1 = [10, 10, 10, 10, 0, 0, 0, 0, 0, 0]
    p2 = [5, 5, 5, 5, 5, 5, 0, 0, 0, 0]
    values = np.column_stack([p1, p2, np.arange(10.0), np.arange(10.0) ** 2])
    dataset = Dataset(
        name="EXACT", columns=("p1", "p2", "v1", "v2"),
        roles=("permanent", "permanent", "vulnerable", "vulnerable"), values=values,
    )
    mask = induce(dataset, MechanismSpec(kind="MAR", pattern="uniform", p_m=1.0, trigger_columns=(0, 1), seed=0))
    flagged = mask.cells.any(axis=1)
    assert_array_equal(np.flatnonzero(flagged), [0, 1, 2, 3])
    assert flagged.mean() == pytest.approx(0.4)
    assert mask.cells[:4, 2:].all()
    assert not mask.cells[:, :2].any()


def test_boston_categorical_column_is_never_masked(tmp_path):
    entry = load_catalog()["BH"]
    rng = np.random.default_rng(3)
    frame = pd.DataFrame(rng.normal(size=(60, 14)), columns=entry.column_names)
    frame["CHAS"] = rng.integers(0, 2, size=60)
    path = tmp_path / "boston.csv"
    frame.to_csv(path, index=False)
    dataset = load_csv(path, entry=entry.model_copy(update={"rows": 60}))
    chas = dataset.column_index("CHAS")
    assert dataset.roles[chas] == "permanent"

    mnar = MechanismSpec(kind="MNAR", pattern="random", p_m=1.0, p_p=1.0,
                         trigger_columns=tuple(trigger_candidates(dataset, "MNAR")[:2]))
    specs = [MechanismSpec(kind="MCAR", pattern="uniform", p_m=1.0), mnar]
    for _ in range(100):
        for spec in specs:
            mask = induce(dataset, spec, rng)
            assert mask.cells.any()
            assert not mask.cells[:, chas].any()

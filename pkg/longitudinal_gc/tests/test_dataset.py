import json

import numpy as np
import pytest

from longitudinal_gc.data.dataset import (
    Individual,
    LongitudinalDataset,
    Standardizer,
    fit_standardizer,
    invert_standardizer,
    load_csv,
    meta_path_for,
    save_csv,
    standardize,
)
from longitudinal_gc.errors import DataError


# -----------------------------
# Helpers
# -----------------------------

def make_individual(ind_id="a", values=None, observed=None, times=None):
    values = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]) if values is None else np.asarray(values, float)
    observed = np.ones_like(values, dtype=bool) if observed is None else np.asarray(observed, bool)
    times = np.arange(values.shape[0], dtype=float) if times is None else times
    return Individual(ind_id, times, values, observed)


def make_dataset(*individuals, names=("x", "y")):
    return LongitudinalDataset(tuple(individuals), names)


def write_csv(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


# -----------------------------
# Individual / Dataset
# -----------------------------

def test_unobserved_cells_hold_nan_and_arrays_are_read_only():
    ind = make_individual(observed=[[True, False], [True, True], [False, True]])
    assert np.isnan(ind.values[0, 1])
    assert np.isnan(ind.values[2, 0])
    assert ind.values[1, 1] == 4.0
    with pytest.raises(ValueError):
        ind.values[0, 0] = 9.0


def test_times_must_strictly_increase():
    with pytest.raises(DataError):
        make_individual(times=np.array([0.0, 2.0, 2.0]))


def test_shape_mismatch_rejected():
    with pytest.raises(DataError):
        Individual("a", np.arange(3.0), np.zeros((3, 2)), np.ones((2, 2), dtype=bool))


def test_duplicate_ids_rejected():
    with pytest.raises(DataError):
        make_dataset(make_individual("a"), make_individual("a"))


def test_variable_count_must_match_names():
    with pytest.raises(DataError):
        make_dataset(make_individual("a"), names=("x", "y", "z"))


def test_subset_keeps_requested_order_and_rejects_unknown_ids():
    data = make_dataset(make_individual("a"), make_individual("b"), make_individual("c"))
    assert data.subset(["c", "a"]).ids == ["c", "a"]
    with pytest.raises(DataError):
        data.subset(["zz"])


def test_observed_fraction_counts_cells():
    data = make_dataset(make_individual(observed=[[True, False], [True, True], [False, True]]))
    assert data.observed_fraction() == pytest.approx(4 / 6)


# -----------------------------
# Standardization
# -----------------------------

def test_standardizer_uses_observed_cells_only():
    values = [[1.0, 10.0], [3.0, 1000.0], [5.0, 30.0]]
    observed = [[True, True], [True, False], [True, True]]
    data = make_dataset(make_individual(values=values, observed=observed))
    s = fit_standardizer(data)
    assert s.mean == pytest.approx((3.0, 20.0))
    assert s.std == pytest.approx((np.std([1.0, 3.0, 5.0]), 10.0))


def test_standardize_gives_zero_mean_unit_std():
    rng = np.random.default_rng(0)
    inds = [make_individual(str(i), values=rng.normal(5.0, 3.0, size=(4, 2))) for i in range(10)]
    data, _ = standardize(make_dataset(*inds))
    for k in range(2):
        cells = data.observed_cells(k)
        assert np.mean(cells) == pytest.approx(0.0, abs=1e-12)
        assert np.std(cells) == pytest.approx(1.0)


def test_zero_variance_variable_flagged_with_unit_std():
    values = [[1.0, 7.0], [2.0, 7.0], [3.0, 7.0]]
    s = fit_standardizer(make_dataset(make_individual(values=values)))
    assert s.std[1] == 1.0
    assert s.degenerate == ("y",)


def test_variable_without_observations_raises():
    observed = [[True, False], [True, False], [True, False]]
    with pytest.raises(DataError):
        fit_standardizer(make_dataset(make_individual(observed=observed)))


def test_unobserved_variable_allowed_when_requested():
    ind = make_individual(observed=[[True, False], [True, False], [True, False]])
    s = fit_standardizer(make_dataset(ind), allow_unobserved=True)
    assert s.mean[1] == 0.0
    assert s.std[1] == 1.0
    assert s.degenerate == ("y",)


def test_invert_standardizer_restores_values():
    data = make_dataset(make_individual("a"), make_individual("b", values=[[0.0, 1.0], [2.0, 2.0], [9.0, 4.0]]))
    scaled, s = standardize(data)
    restored = invert_standardizer(scaled, s)
    for orig, back in zip(data.individuals, restored.individuals):
        np.testing.assert_allclose(back.values, orig.values)


def test_standardizer_dict_round_trip_and_validation():
    s = Standardizer(("x", "y"), (1.0, 2.0), (0.5, 3.0), ("y",))
    assert Standardizer.from_dict(s.to_dict()) == s
    with pytest.raises(DataError):
        Standardizer.from_dict({"variable_names": ["x"], "mean": [0.0], "std": [0.0]})


# -----------------------------
# CSV I/O
# -----------------------------

def test_load_csv_parses_missing_cells_and_sorts_times(tmp_path):
    path = write_csv(tmp_path, "individual_id,time,x,y\nb,2,1.5,\nb,1,0.5,2\na,0,3,4\n")
    data = load_csv(path)
    assert data.variable_names == ("x", "y")
    assert data.ids == ["b", "a"]
    b = data.individuals[0]
    np.testing.assert_array_equal(b.times, [1.0, 2.0])
    assert b.values[0, 0] == 0.5
    assert not b.observed[1, 1]
    assert np.isnan(b.values[1, 1])


def test_load_csv_reports_row_of_non_numeric_cell(tmp_path):
    path = write_csv(tmp_path, "individual_id,time,x\na,0,1\na,1,oops\n")
    with pytest.raises(DataError, match="row 3"):
        load_csv(path)


def test_load_csv_rejects_infinite_cell(tmp_path):
    path = write_csv(tmp_path, "individual_id,time,x\na,0,1\na,1,inf\nb,0,-inf\n")
    with pytest.raises(DataError, match="row 3.*non-finite"):
        load_csv(path)


def test_load_csv_rejects_duplicate_individual_time(tmp_path):
    path = write_csv(tmp_path, "individual_id,time,x\na,0,1\na,0,2\n")
    with pytest.raises(DataError, match="duplicate"):
        load_csv(path)


def test_load_csv_rejects_bad_header(tmp_path):
    path = write_csv(tmp_path, "id,t,x\na,0,1\n")
    with pytest.raises(DataError):
        load_csv(path)


def test_load_csv_missing_file_is_data_error(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "absent.csv")


def test_save_then_load_preserves_values_mask_and_meta(tmp_path):
    ind = make_individual("p1", values=[[0.1, 1 / 3], [2.5e-7, -4.0], [1e10, 0.0]],
                          observed=[[True, True], [False, True], [True, True]], times=np.array([3.0, 4.0, 7.0]))
    data = make_dataset(ind).with_meta(seed=7, note="x")
    path = save_csv(data, tmp_path / "out.csv")
    back = load_csv(path)
    np.testing.assert_array_equal(back.individuals[0].observed, ind.observed)
    np.testing.assert_array_equal(back.individuals[0].times, ind.times)
    np.testing.assert_array_equal(np.nan_to_num(back.individuals[0].values, nan=-1),
                                  np.nan_to_num(ind.values, nan=-1))
    assert back.meta == {"seed": 7, "note": "x"}
    assert json.loads(meta_path_for(path).read_text())["seed"] == 7

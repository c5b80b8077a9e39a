import json

import numpy as np
import pytest

from iotguard.data import (
    DatasetSchema,
    FeatureKind,
    LabeledDataset,
    kdd_schema,
    load_kddcup,
    load_schema,
    stratified_split,
    subsample,
    write_kddcup,
)
from iotguard.errors import ParseError

HTTP_LINE = (
    "0,tcp,http,SF,181,5450,0,0,0,0,0,1,0,0,0,0,0,0,0,0,0,0,8,8,0.00,0.00,0.00,0.00,"
    "1.00,0.00,0.00,9,9,1.00,0.00,0.11,0.00,0.00,0.00,0.00,0.00,normal."
)
SMURF_LINE = (
    "0,icmp,ecr_i,SF,1032,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,511,511,0.00,0.00,0.00,0.00,"
    "1.00,0.00,0.00,255,255,1.00,0.00,1.00,0.00,0.00,0.00,0.00,0.00,smurf."
)
UDP_LINE = (
    "0,udp,private,SF,105,146,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,1,1,0.00,0.00,0.00,0.00,"
    "1.00,0.00,0.00,255,254,1.00,0.01,0.00,0.00,0.00,0.00,0.00,0.00,normal"
)


def write_lines(path, *lines):
    path.write_text("\n".join(lines) + "\n")
    return path


def make_dataset(labels, width=2):
    labels = np.asarray(labels, dtype=np.int8)
    schema = DatasetSchema(tuple((f"f{j}", FeatureKind.CONTINUOUS) for j in range(width)))
    rows = np.arange(len(labels) * width, dtype=float).reshape(len(labels), width)
    return LabeledDataset(schema, rows, labels, tuple("x" for _ in labels), np.arange(len(labels)))


def test_kdd_schema_has_41_uniquely_named_columns():
    schema = kdd_schema()
    assert len(schema.columns) == 41
    assert len(set(schema.names)) == 41
    assert schema.categorical() == ["protocol_type", "service", "flag"]


def test_load_normal_http_line(tmp_path):
    ds = load_kddcup(write_lines(tmp_path / "a.csv", HTTP_LINE, SMURF_LINE))
    assert ds.labels.tolist() == [0, 1]
    assert ds.category(0, "protocol_type") == "tcp"
    assert ds.rows[0, ds.schema.names.index("src_bytes")] == 181
    assert ds.rows[0, ds.schema.names.index("dst_bytes")] == 5450
    assert ds.raw_labels == ("normal.", "smurf.")


def test_label_without_trailing_period(tmp_path):
    ds = load_kddcup(write_lines(tmp_path / "a.csv", UDP_LINE))
    assert ds.labels.tolist() == [0]


def test_vocabularies_sorted_and_indices_remapped(tmp_path):
    ds = load_kddcup(write_lines(tmp_path / "a.csv", UDP_LINE, HTTP_LINE, SMURF_LINE))
    assert ds.schema.vocabularies["protocol_type"] == ("icmp", "tcp", "udp")
    assert [ds.category(i, "protocol_type") for i in range(3)] == ["udp", "tcp", "icmp"]


def test_wrong_field_count_names_line(tmp_path):
    short = HTTP_LINE.rsplit(",", 1)[0]
    path = write_lines(tmp_path / "a.csv", HTTP_LINE, short)
    with pytest.raises(ParseError, match=r":2: expected 42 fields, got 41"):
        load_kddcup(path)


def test_non_numeric_continuous_field(tmp_path):
    bad = HTTP_LINE.replace("0,tcp,http,SF,181", "0,tcp,http,SF,lots", 1)
    with pytest.raises(ParseError, match="src_bytes"):
        load_kddcup(write_lines(tmp_path / "a.csv", bad))


def test_round_trip(tmp_path, synthetic_csv):
    ds = load_kddcup(synthetic_csv)
    out = tmp_path / "again.csv"
    write_kddcup(ds, out)
    again = load_kddcup(out)
    np.testing.assert_array_equal(ds.rows, again.rows)
    np.testing.assert_array_equal(ds.labels, again.labels)
    assert ds.schema.vocabularies == again.schema.vocabularies
    assert ds.raw_labels == again.raw_labels


def test_gzip_input(tmp_path):
    import gzip

    path = tmp_path / "a.csv.gz"
    with gzip.open(path, "wt") as fh:
        fh.write(HTTP_LINE + "\n")
    assert len(load_kddcup(path)) == 1


def test_schema_override(tmp_path):
    spec = [{"name": "proto", "kind": "categorical"}, {"name": "bytes", "kind": "continuous"}]
    (tmp_path / "schema.json").write_text(json.dumps(spec))
    schema = load_schema(tmp_path / "schema.json")
    ds = load_kddcup(write_lines(tmp_path / "a.csv", "tcp,5,normal.", "udp,7,neptune."), schema)
    assert ds.schema.vocabularies == {"proto": ("tcp", "udp")}
    assert ds.labels.tolist() == [0, 1]


def test_labels_are_total(synthetic_csv):
    ds = load_kddcup(synthetic_csv)
    assert set(np.unique(ds.labels)) <= {0, 1}
    assert (ds.labels == 0).sum() + (ds.labels == 1).sum() == len(ds)


def test_split_exact_divisibility():
    ds = make_dataset([0] * 50 + [1] * 50)
    train, val, test = stratified_split(ds, (0.8, 0.1, 0.1), seed=7)
    assert (len(train), len(val), len(test)) == (80, 10, 10)
    for part, per_class in ((train, 40), (val, 5), (test, 5)):
        assert (part.labels == 0).sum() == per_class
        assert (part.labels == 1).sum() == per_class


def test_split_is_deterministic_disjoint_and_exhaustive():
    ds = make_dataset([0] * 37 + [1] * 23)
    a = stratified_split(ds, (0.6, 0.2, 0.2), seed=11)
    b = stratified_split(ds, (0.6, 0.2, 0.2), seed=11)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.row_ids, y.row_ids)
    ids = [set(p.row_ids.tolist()) for p in a]
    assert set().union(*ids) == set(range(60))
    assert not (ids[0] & ids[1]) and not (ids[0] & ids[2]) and not (ids[1] & ids[2])
    for part, f in zip(a, (0.6, 0.2, 0.2)):
        for cls, total in ((0, 37), (1, 23)):
            assert abs((part.labels == cls).sum() - f * total) <= 1


def test_split_rejects_bad_fractions():
    with pytest.raises(ValueError):
        stratified_split(make_dataset([0, 1] * 5), (0.5, 0.5, 0.5), seed=0)


def test_split_rejects_tiny_class():
    with pytest.raises(ValueError, match="fewer than 3 splits"):
        stratified_split(make_dataset([0] * 10 + [1, 1]), (0.6, 0.2, 0.2), seed=0)


def test_subsample_all_rows_is_identity_up_to_order():
    ds = make_dataset([0, 1, 1, 0, 1])
    out = subsample(ds, 5, seed=1)
    assert sorted(out.row_ids.tolist()) == list(range(5))


def test_subsample_zero_keeps_schema():
    ds = make_dataset([0, 1, 1])
    out = subsample(ds, 0, seed=1)
    assert len(out) == 0 and out.schema == ds.schema and out.rows.shape == (0, 2)


def test_subsample_is_stratified():
    ds = make_dataset([0] * 6000 + [1] * 4000)
    out = subsample(ds, 1000, seed=5)
    assert abs((out.labels == 0).sum() - 600) <= 1
    assert abs((out.labels == 1).sum() - 400) <= 1
    np.testing.assert_array_equal(out.row_ids, subsample(ds, 1000, seed=5).row_ids)


def test_subsample_too_many():
    with pytest.raises(ValueError):
        subsample(make_dataset([0, 1]), 3, seed=0)


def test_dataset_is_immutable(synthetic_csv):
    ds = load_kddcup(synthetic_csv)
    with pytest.raises(ValueError):
        ds.rows[0, 0] = 1.0

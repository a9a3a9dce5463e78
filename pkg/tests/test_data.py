import pytest

from charnet.data import LabeledDataset, balance_sample, load_dataset
from charnet.errors import DataError


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_basic_parse(self, tmp_path):
        path = _write(tmp_path, "d.csv", 'text,label\nhi,ham\n"buy, now",spam\n')
        data = load_dataset(path, "csv")
        assert len(data) == 2
        assert data.label_vocab == ["ham", "spam"]
        assert data.records[1] == ("buy, now", frozenset({1}))

    def test_vocab_first_seen_order(self, tmp_path):
        path = _write(tmp_path, "d.csv", "text,label\na,z\nb,a\nc,z\n")
        assert load_dataset(path, "csv").label_vocab == ["z", "a"]

    def test_missing_label_names_line(self, tmp_path):
        path = _write(tmp_path, "d.csv", "text,label\nok,ham\nno label here\n")
        with pytest.raises(DataError, match="line 3"):
            load_dataset(path, "csv")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_dataset(tmp_path / "absent.csv", "csv")

    def test_bad_header(self, tmp_path):
        path = _write(tmp_path, "d.csv", "body,tag\nx,y\n")
        with pytest.raises(DataError, match="header"):
            load_dataset(path, "csv")

    def test_unknown_format(self, tmp_path):
        path = _write(tmp_path, "d.csv", "text,label\na,b\n")
        with pytest.raises(DataError, match="unknown dataset format"):
            load_dataset(path, "xml")


class TestLoadJsonl:
    def test_multi_label_record(self, tmp_path):
        path = _write(tmp_path, "d.jsonl",
                      '{"text": "x", "labels": ["a", "b"]}\n'
                      '{"text": "y", "labels": ["b"]}\n')
        data = load_dataset(path, "jsonl")
        assert len(data) == 2
        assert data.records[0] == ("x", frozenset({0, 1}))
        assert data.label_vocab == ["a", "b"]

    def test_invalid_json_names_line(self, tmp_path):
        path = _write(tmp_path, "d.jsonl", '{"text": "ok", "labels": []}\n{oops\n')
        with pytest.raises(DataError, match="line 2"):
            load_dataset(path, "jsonl")

    def test_missing_keys_rejected(self, tmp_path):
        path = _write(tmp_path, "d.jsonl", '{"text": "no labels"}\n')
        with pytest.raises(DataError, match="line 1"):
            load_dataset(path, "jsonl")


def _counts(data):
    out = {}
    for _, labels in data.records:
        (lab,) = labels
        name = data.label_vocab[lab]
        out[name] = out.get(name, 0) + 1
    return out


class TestBalanceSample:
    def _dataset(self, n_a, n_b):
        records = [(f"a{i}", frozenset({0})) for i in range(n_a)]
        records += [(f"b{i}", frozenset({1})) for i in range(n_b)]
        return LabeledDataset(records, ["A", "B"])

    def test_exact_uniform_histogram(self):
        out = balance_sample(self._dataset(10, 12), 10, seed=0)
        assert _counts(out) == {"A": 10, "B": 10}

    def test_short_class_error_names_class_and_count(self):
        with pytest.raises(DataError, match="class B has 5 < 7"):
            balance_sample(self._dataset(10, 5), 7, seed=0)

    def test_same_seed_same_sample(self):
        d = self._dataset(30, 30)
        a = balance_sample(d, 9, seed=5)
        b = balance_sample(d, 9, seed=5)
        assert a.records == b.records

    def test_different_seeds_differ_when_subsampling(self):
        d = self._dataset(200, 200)
        a = balance_sample(d, 10, seed=1)
        b = balance_sample(d, 10, seed=2)
        assert a.records != b.records

    def test_exhaustive_draw_is_seed_independent(self):
        d = self._dataset(40, 40)
        a = balance_sample(d, 40, seed=1)
        b = balance_sample(d, 40, seed=99)
        assert a.records == b.records
        assert _counts(a) == {"A": 40, "B": 40}

    def test_multi_label_records_not_sampled(self):
        records = [("solo", frozenset({0})), ("both", frozenset({0, 1})),
                   ("b", frozenset({1}))]
        d = LabeledDataset(records, ["A", "B"])
        out = balance_sample(d, 1, seed=0)
        assert ("both", frozenset({0, 1})) not in out.records


def test_label_ids_validated():
    with pytest.raises(DataError):
        LabeledDataset([("x", frozenset({3}))], ["a", "b"])


def test_vocab_distinct():
    with pytest.raises(DataError):
        LabeledDataset([], ["a", "a"])

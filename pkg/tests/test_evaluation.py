import pytest

from surveyq.dataprep import rank_features, split, synth_generate
from surveyq.environment import Action, EnvConfig
from surveyq.evaluation import (
    Metrics,
    evaluate,
    parse_results_table,
    results_table,
    results_tsv,
    run_episode,
)

from conftest import RandomValidPolicy, assert_accounting

# Published comparison rows used as a formatting fixture (accuracy,
# avg queries, avg episode reward).
PUBLISHED_ROWS = [
    ("SL network (k = 2)", 0.73, 2.0, 0.36),
    ("SL network (k = 4)", 0.77, 4.0, 0.35),
    ("SL network (k = 8)", 0.80, 8.0, 0.20),
    ("RL network (kmax = 2)", 0.78, 2.0, 0.45),
    ("RL network (kmax = 4)", 0.78, 2.30, 0.45),
    ("RL network (kmax = 8)", 0.80, 2.35, 0.47),
]


class TwoQueryOraclePolicy:
    """Query both features of the perfect-feature task, then read the answer."""

    def act(self, answered, queries_made):
        if queries_made < 2:
            return Action("query", queries_made)
        return Action("predict", answered[0])


@pytest.fixture(scope="module")
def perfect_setup(perfect_spec):
    ds = synth_generate(perfect_spec, 4000, seed=13)
    ds, _ = rank_features(ds)
    train, test = split(ds, 0.2, seed=0)
    env = EnvConfig(kmax=2, allowed_features=tuple(ds.feature_order[:2]))
    return test, env


class TestEvaluate:
    def test_perfect_policy_metrics(self, perfect_setup):
        test, env = perfect_setup
        metrics = evaluate(TwoQueryOraclePolicy(), test, env, n_episodes=400, seed=1)
        assert metrics.accuracy == 1.0
        assert metrics.avg_queries == 2.0
        assert metrics.avg_return == pytest.approx(0.90, abs=1e-9)
        assert metrics.violation_count == 0
        assert_accounting(metrics)

    def test_deterministic_given_seed(self, perfect_setup):
        test, env = perfect_setup
        m1 = evaluate(TwoQueryOraclePolicy(), test, env, n_episodes=100, seed=9)
        m2 = evaluate(TwoQueryOraclePolicy(), test, env, n_episodes=100, seed=9)
        assert m1 == m2

    def test_identity_holds_with_violating_policies(self, perfect_setup):
        test, env = perfect_setup
        for seed in range(8):
            policy = RandomValidPolicy(env, seed)
            metrics = evaluate(policy, test, env, n_episodes=150, seed=seed)
            assert_accounting(metrics)

    def test_violations_counted_as_incorrect(self, perfect_setup):
        test, env = perfect_setup

        class EarlyPredict:
            def act(self, answered, queries_made):
                return Action("predict", 0)

        metrics = evaluate(EarlyPredict(), test, env, n_episodes=50, seed=0)
        assert metrics.accuracy == 0.0
        assert metrics.violation_count == 50
        assert metrics.avg_queries == 0.0
        assert metrics.avg_return == -1.0
        assert_accounting(metrics)

    def test_run_episode_reports_queries_and_rewards(self, perfect_setup):
        test, env = perfect_setup
        outcome = run_episode(TwoQueryOraclePolicy(), test.records[0], env)
        assert outcome.queries == 2
        assert outcome.rewards[:2] == (-0.05, -0.05)
        assert outcome.correct


class TestPublishedRowsIdentity:
    @pytest.mark.parametrize("name,acc,queries,reward", PUBLISHED_ROWS)
    def test_accounting_identity_within_rounding(self, name, acc, queries, reward):
        assert abs(reward - ((2 * acc - 1) - 0.05 * queries)) <= 0.02


class TestResultsTable:
    def _metrics(self, acc, queries, reward):
        return Metrics(accuracy=acc, avg_queries=queries, avg_return=reward,
                       n_episodes=2000, violation_count=0)

    def test_empty_list_gives_header_only(self):
        text = results_table([])
        assert text.splitlines() == [
            "Model  Accuracy  Avg. Queries  Avg. Episode Reward"
        ]

    def test_single_row_aligned(self):
        text = results_table([("SL network (k = 2)", self._metrics(0.73, 2, 0.36))])
        lines = text.splitlines()
        assert len(lines) == 2
        assert lines[1].startswith("SL network (k = 2)")
        assert "0.73" in lines[1] and "2.00" in lines[1] and "+0.36" in lines[1]

    def test_published_rows_render_and_roundtrip(self):
        rows = [(name, self._metrics(a, q, r)) for name, a, q, r in PUBLISHED_ROWS]
        text = results_table(rows)
        parsed = parse_results_table(text)
        for (name, acc, queries, reward), (pname, pacc, pq, pr) in zip(
            PUBLISHED_ROWS, parsed
        ):
            assert pname == name
            assert pacc == pytest.approx(acc, abs=0.005)
            assert pq == pytest.approx(queries, abs=0.005)
            assert pr == pytest.approx(reward, abs=0.005)

    def test_tsv_rows_full_precision(self):
        m = Metrics(accuracy=1 / 3, avg_queries=7 / 3, avg_return=-0.123456789,
                    n_episodes=300, violation_count=2)
        text = results_tsv([("x", m)])
        line = text.splitlines()[1].split("\t")
        assert float(line[1]) == m.accuracy
        assert float(line[3]) == m.avg_return
        assert line[5] == "2"

    def test_parse_rejects_garbage(self):
        with pytest.raises(ValueError):
            parse_results_table("not a table\nat all")

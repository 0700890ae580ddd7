#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "csreft/checkpoint.hpp"
#include "csreft/errors.hpp"
#include "csreft/rng.hpp"
#include "csreft/taskbench.hpp"

using namespace csreft;

namespace {

TaskSpec make_spec(TaskKind kind, int id = 1, int seq = 8, int vocab = 16) {
    TaskSpec s;
    s.id = id;
    s.kind = kind;
    s.seq_len = seq;
    s.vocab = vocab;
    return s;
}

BenchmarkConfig fast_bench(std::vector<TaskKind> kinds, int steps) {
    BenchmarkConfig b;
    b.backbone.vocab_size = 8;
    b.backbone.d = 16;
    b.backbone.n_layers = 2;
    b.backbone.n_heads = 4;
    b.backbone.max_seq_len = 6;
    b.backbone.seed = 2;
    b.task_kinds = std::move(kinds);
    b.seq_len = 6;
    b.vocab = 8;
    b.rank = 4;
    b.examples_per_task = 96;
    b.holdout_fraction = 0.25;
    b.train.steps = steps;
    b.train.batch_size = 8;
    b.train.lr = 1e-2;
    b.train.lambda = 0.01;
    b.train.seed = 3;
    return b;
}

}  // namespace

TEST_CASE("task targets follow the stated mappings") {
    CHECK(task_targets(make_spec(TaskKind::kCopy), {3, 1, 2}) == std::vector<int>{3, 1, 2});
    CHECK(task_targets(make_spec(TaskKind::kReverse), {1, 2, 3}) == std::vector<int>{3, 2, 1});
    TaskSpec inc = make_spec(TaskKind::kIncrement);
    inc.vocab = 5;
    CHECK(task_targets(inc, {4, 0}) == std::vector<int>{0, 1});
    TaskSpec con = make_spec(TaskKind::kConstant, 3);
    CHECK(task_targets(con, {7, 7}) == std::vector<int>{3 % 16, 3 % 16});
}

TEST_CASE("generated data is deterministic and respects the cue token") {
    TaskSpec s = make_spec(TaskKind::kCopy, 2, 6, 8);
    s.cue = 5;
    std::vector<Example> a = gen_task_data(s, 40, 7);
    std::vector<Example> b = gen_task_data(s, 40, 7);
    REQUIRE(a.size() == 40);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].tokens == b[i].tokens);
        CHECK(a[i].targets == b[i].targets);
        CHECK(a[i].tokens[0] == 5);
        CHECK(a[i].task == 1);
        CHECK(a[i].targets == task_targets(s, a[i].tokens));
        for (int t : a[i].tokens) CHECK(t < 8);
    }
    std::vector<Example> c = gen_task_data(s, 40, 8);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i].tokens != c[i].tokens;
    CHECK(differs);
}

TEST_CASE("invalid task specs are rejected") {
    TaskSpec s = make_spec(TaskKind::kCopy);
    s.vocab = 1;
    CHECK_THROWS_AS(gen_task_data(s, 4, 1), ConfigError);
    s = make_spec(TaskKind::kCopy);
    CHECK_THROWS_AS(gen_task_data(s, 0, 1), ConfigError);
    s.cue = 99;
    CHECK_THROWS_AS(gen_task_data(s, 4, 1), ConfigError);
    CHECK_THROWS_AS(task_kind_from_name("palindrome"), ConfigError);
}

TEST_CASE("splits are disjoint, deterministic and recorded") {
    TaskSpec s = make_spec(TaskKind::kIncrement, 1, 6, 8);
    std::vector<Example> data = gen_task_data(s, 50, 11);
    SplitData split = split_dataset(data, 0.25, 13);
    CHECK(split.holdout.size() == 13);  // ceil(50 * 0.25)
    CHECK(split.train.size() == 37);
    CHECK(split.holdout_indices.size() == 13);
    CHECK(std::is_sorted(split.holdout_indices.begin(), split.holdout_indices.end()));
    std::set<int> idx(split.holdout_indices.begin(), split.holdout_indices.end());
    CHECK(idx.size() == 13);

    SplitData again = split_dataset(data, 0.25, 13);
    CHECK(again.holdout_indices == split.holdout_indices);
    CHECK_THROWS_AS(split_dataset(data, 1.5, 13), ConfigError);
}

TEST_CASE("shared rank matches the composed budget within ten percent") {
    // d=32, k=4, r=4, two sites: composed budget 4*2*260 + 596 = 2676;
    // per-site shared cost is 65r, so rank 21 gives 2730 (2.0% over)
    const std::int64_t budget = 4 * 2 * edit_param_count(4, 32) + router_param_count(32, 4);
    CHECK(budget == 2676);
    CHECK(match_shared_rank(budget, 32, 2) == 21);

    // impossible at d=4: composed budget far exceeds any shared edit
    const std::int64_t small = 4 * 1 * edit_param_count(4, 4) + router_param_count(4, 4);
    CHECK(small == 166);
    CHECK_THROWS_AS(match_shared_rank(small, 4, 1), BudgetError);
}

TEST_CASE("specialists train independently of each other") {
    BenchmarkConfig b = fast_bench({TaskKind::kCopy, TaskKind::kConstant}, 40);
    FrozenModel model = build_frozen(b.backbone);
    std::vector<HookSite> sites = b.sites();

    TaskSpec s1 = make_spec(TaskKind::kCopy, 1, b.seq_len, b.vocab);
    TaskSpec s2 = make_spec(TaskKind::kConstant, 2, b.seq_len, b.vocab);
    std::vector<std::vector<Example>> pools = {gen_task_data(s1, 32, 1), gen_task_data(s2, 32, 2)};

    std::vector<TrainState> specialists = train_specialists(model, pools, 2, sites, b.train);
    REQUIRE(specialists.size() == 2);
    CHECK(specialists[0].step == 40);
    CHECK(specialists[1].step == 40);

    // rerunning task 2 alone (same derived seeds) gives bit-identical
    // parameters: task 1's training shares nothing with it
    Rng seeder(b.train.seed);
    (void)seeder.next_u64();  // task 1 state seed
    (void)seeder.next_u64();  // task 1 train seed
    TrainState solo = init_state(model, 1, 2, sites, false, seeder.next_u64());
    TrainConfig cfg = b.train;
    cfg.seed = seeder.next_u64();
    train_run(solo, model, pools[1], cfg);

    Checkpoint a = checkpoint_from_state(specialists[1], model);
    Checkpoint c = checkpoint_from_state(solo, model);
    REQUIRE(a.tensors.size() == c.tensors.size());
    for (std::size_t i = 0; i < a.tensors.size(); ++i) {
        CHECK(a.tensors[i].second.data == c.tensors[i].second.data);
    }
}

TEST_CASE("a specialist beats the frozen model on its own task after 500 steps") {
    BenchmarkConfig b = fast_bench({TaskKind::kCopy, TaskKind::kConstant}, 500);
    FrozenModel model = build_frozen(b.backbone);
    TaskSpec spec = make_spec(TaskKind::kConstant, 1, b.seq_len, b.vocab);
    std::vector<Example> data = gen_task_data(spec, 96, 21);
    SplitData split = split_dataset(data, 0.25, 22);

    std::vector<TrainState> specialists =
        train_specialists(model, {split.train}, b.rank, b.sites(), b.train);
    const double frozen = eval_frozen(model, split.holdout);
    const double trained = eval_loss(specialists[0], model, split.holdout, GateMode::kSoft);
    CHECK(trained < frozen);
}

TEST_CASE("two identical tasks: the composed model stays close to the shared edit") {
    BenchmarkConfig b = fast_bench({TaskKind::kCopy, TaskKind::kCopy}, 800);
    InterferenceReport report = run_interference_benchmark(b);
    CHECK(report.k == 2);
    CHECK(report.mean_csreft <= 1.05 * report.mean_shared);
    for (const auto& row : report.matrix) {
        for (double v : row) CHECK(std::isfinite(v));
    }
}

TEST_CASE("copy versus reverse: the composed model is no worse than the shared edit") {
    BenchmarkConfig b = fast_bench({TaskKind::kCopy, TaskKind::kReverse}, 800);
    InterferenceReport report = run_interference_benchmark(b);
    CHECK(report.mean_csreft <= report.mean_shared);
    CHECK(report.matrix.size() == 2);
    CHECK(report.matrix[0].size() == 2);
    CHECK(std::llabs(report.budget_shared - report.budget_csreft) * 10 <=
          report.budget_csreft);

    // report rendering carries the documented keys
    std::string text = render_report(report);
    for (const char* key :
         {"format = csreft-interference-report-v1", "mean_loss_csreft", "matrix.1.2",
          "holdout_indices.task1", "shared_rank", "budget_ratio"}) {
        CHECK(text.find(key) != std::string::npos);
    }
    std::string csv = render_matrix_csv(report);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
    CHECK(std::count(csv.begin(), csv.end(), ',') == 2);
}

TEST_CASE("benchmark requires at least two tasks") {
    BenchmarkConfig b = fast_bench({TaskKind::kCopy}, 10);
    CHECK_THROWS_AS(run_interference_benchmark(b), ConfigError);
}

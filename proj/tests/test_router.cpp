#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "csreft/errors.hpp"
#include "csreft/gradcheck.hpp"
#include "csreft/linalg.hpp"
#include "csreft/rng.hpp"
#include "csreft/router.hpp"

using namespace csreft;

namespace {

Tensor random_vec(int d, Rng& rng) {
    Tensor h = Tensor::zeros({d});
    for (double& v : h.data) v = rng.gaussian();
    return h;
}

SubspaceEdit perturbed_edit(int r, int d, std::uint64_t seed) {
    SubspaceEdit e = identity_init(r, d, HookSite{0, {}}, seed);
    Rng rng(seed + 1);
    for (double& v : e.coord_map.data) v += 0.4 * rng.gaussian();
    for (double& v : e.coord_bias.data) v += rng.gaussian();
    return e;
}

}  // namespace

TEST_CASE("all-zero router outputs one half on every gate") {
    RouterNet r = zero_router(6, 3);
    Tensor alpha = route(r, Tensor::vector({1, -2, 3, 0, 1, 5}));
    for (double v : alpha.data) CHECK(v == 0.5);
}

TEST_CASE("large output bias saturates the gates") {
    RouterNet r = zero_router(4, 2);
    r.b2 = Tensor::vector({100, 100});
    Tensor alpha = route(r, Tensor::vector({0.3, -0.1, 2, 1}));
    for (double v : alpha.data) CHECK(std::fabs(v - 1.0) <= 1e-12);
}

TEST_CASE("route matches a hand evaluation of the two layers") {
    RouterNet r = zero_router(4, 2);
    r.w1 = Tensor::matrix(2, 4, {0.1, -0.2, 0.3, 0.0, 0.5, 0.1, -0.1, 0.2});
    r.b1 = Tensor::vector({0.05, -0.4});
    r.w2 = Tensor::matrix(2, 2, {1.0, -1.0, 0.5, 2.0});
    r.b2 = Tensor::vector({0.1, -0.3});
    Tensor h = Tensor::vector({1.0, 2.0, -1.0, 0.5});

    // oracle by loops
    double z[2];
    for (int i = 0; i < 2; ++i) {
        double s = r.b1.at(i);
        for (int j = 0; j < 4; ++j) s += r.w1.at(i, j) * h.at(j);
        z[i] = s > 0 ? s : 0;
    }
    double want[2];
    for (int i = 0; i < 2; ++i) {
        double s = r.b2.at(i);
        for (int j = 0; j < 2; ++j) s += r.w2.at(i, j) * z[j];
        want[i] = 1.0 / (1.0 + std::exp(-s));
    }

    Tensor alpha = route(r, h);
    CHECK(alpha.at(0) == doctest::Approx(want[0]).epsilon(1e-15));
    CHECK(alpha.at(1) == doctest::Approx(want[1]).epsilon(1e-15));
}

TEST_CASE("hidden width is floor(d/2), including odd d") {
    RouterNet odd = init_router(5, 3, 1);
    CHECK(odd.hidden() == 2);
    CHECK(odd.w1.shape == std::vector<int>{2, 5});
    CHECK(odd.w2.shape == std::vector<int>{3, 2});
    CHECK(init_router(1, 2, 1).hidden() == 1);  // never collapses to zero
    Tensor alpha = route(odd, Tensor::vector({1, 2, 3, 4, 5}));
    CHECK(alpha.shape == std::vector<int>{3});
}

TEST_CASE("route output stays strictly inside (0,1)") {
    Rng rng(3);
    RouterNet r = init_router(8, 4, 9);
    for (int trial = 0; trial < 200; ++trial) {
        Tensor alpha = route(r, random_vec(8, rng));
        for (double v : alpha.data) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }
}

TEST_CASE("hard gating thresholds with ties going on") {
    Tensor alpha = Tensor::vector({0.4, 0.6});
    Tensor hard = gate(alpha, GateMode::kHard, 0.5);
    CHECK(hard.data == std::vector<double>{0, 1});

    Tensor tie = gate(Tensor::vector({0.5}), GateMode::kHard, 0.5);
    CHECK(tie.data == std::vector<double>{1});

    Tensor soft = gate(alpha, GateMode::kSoft, 0.5);
    CHECK(soft.data == alpha.data);
}

TEST_CASE("raising the threshold only turns gates off") {
    Tensor alpha = Tensor::vector({0.1, 0.35, 0.5, 0.72, 0.9});
    Tensor prev = gate(alpha, GateMode::kHard, 0.0);
    for (double th : {0.1, 0.3, 0.5, 0.7, 0.95}) {
        Tensor cur = gate(alpha, GateMode::kHard, th);
        for (int i = 0; i < 5; ++i) CHECK(cur.at(i) <= prev.at(i));
        prev = cur;
    }
}

TEST_CASE("compose with zero gates returns the input bit-exactly") {
    std::vector<SubspaceEdit> edits = {perturbed_edit(2, 8, 1), perturbed_edit(2, 8, 2)};
    Rng rng(4);
    Tensor h = random_vec(8, rng);
    Tensor out = compose(edits, Tensor::vector({0, 0}), h);
    CHECK(out.data == h.data);
}

TEST_CASE("one-hot gates reproduce apply_edit") {
    std::vector<SubspaceEdit> edits = {perturbed_edit(2, 8, 5), perturbed_edit(2, 8, 6)};
    Rng rng(7);
    Tensor h = random_vec(8, rng);
    Tensor via_compose = compose(edits, Tensor::vector({0, 1}), h);
    Tensor direct = apply_edit(edits[1], h);
    CHECK(max_abs_diff(via_compose, direct) <= 1e-14);
}

TEST_CASE("composed delta is the gated sum of per-edit deltas") {
    std::vector<SubspaceEdit> edits = {perturbed_edit(2, 10, 11), perturbed_edit(3, 10, 12),
                                       perturbed_edit(1, 10, 13)};
    Rng rng(8);
    Tensor h = random_vec(10, rng);
    Tensor alpha = Tensor::vector({0.25, 0.8, 0.5});
    Tensor out = compose(edits, alpha, h);
    // oracle: explicit summation
    Tensor want = h;
    for (int i = 0; i < 3; ++i) {
        Tensor delta = edit_delta(edits[static_cast<std::size_t>(i)], h);
        for (int j = 0; j < 10; ++j) want.at(j) += alpha.at(i) * delta.at(j);
    }
    CHECK(max_abs_diff(out, want) <= 1e-12);
}

TEST_CASE("zero-gated edits cannot influence the output") {
    std::vector<SubspaceEdit> edits = {perturbed_edit(2, 8, 21), perturbed_edit(2, 8, 22)};
    Rng rng(9);
    Tensor h = random_vec(8, rng);
    Tensor alpha = gate(Tensor::vector({0.8, 0.2}), GateMode::kHard, 0.5);  // (1, 0)
    Tensor before = compose(edits, alpha, h);

    for (double& v : edits[1].coord_map.data) v += 1e6 * rng.gaussian();
    for (double& v : edits[1].coord_bias.data) v -= 1e6;
    Tensor after = compose(edits, alpha, h);
    CHECK(before.data == after.data);
}

TEST_CASE("orthogonal rowspaces: projection recovers each gated delta") {
    // two edits on explicitly orthogonal coordinate blocks
    SubspaceEdit e1, e2;
    e1.basis = Tensor::matrix(2, 6, {1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0});
    e2.basis = Tensor::matrix(2, 6, {0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0});
    Rng rng(10);
    for (SubspaceEdit* e : {&e1, &e2}) {
        e->coord_map = e->basis;
        for (double& v : e->coord_map.data) v += 0.5 * rng.gaussian();
        e->coord_bias = random_vec(2, rng);
    }
    Tensor h = random_vec(6, rng);
    Tensor alpha = Tensor::vector({0.7, 0.3});
    Tensor composed = compose({e1, e2}, alpha, h);

    for (int which = 0; which < 2; ++which) {
        const SubspaceEdit& e = which == 0 ? e1 : e2;
        Tensor p = rowspace_projector(e.basis);
        Tensor delta = edit_delta(e, h);
        for (int i = 0; i < 6; ++i) {
            double proj = 0.0;
            for (int j = 0; j < 6; ++j) proj += p.at(i, j) * (composed.at(j) - h.at(j));
            CHECK(std::fabs(proj - alpha.at(which) * delta.at(i)) <= 1e-10);
        }
    }
}

TEST_CASE("gradients flow through route and compose") {
    const int d = 8, k = 2;
    RouterNet router = init_router(d, k, 31);
    std::vector<SubspaceEdit> edits = {perturbed_edit(2, d, 41), perturbed_edit(2, d, 42)};
    Rng rng(15);
    Tensor h = random_vec(d, rng);

    auto builder = [&](Tape& t, const std::vector<Tensor>& p, std::vector<NodeId>& leaves) {
        RouterNodes rn;
        rn.w1 = t.input(p[0], true);
        rn.b1 = t.input(p[1], true);
        rn.w2 = t.input(p[2], true);
        rn.b2 = t.input(p[3], true);
        EditNodes e0{t.input(p[4], true), t.input(p[5], true), t.input(p[6], true)};
        EditNodes e1{t.input(p[7], true), t.input(p[8], true), t.input(p[9], true)};
        leaves = {rn.w1, rn.b1, rn.w2, rn.b2, e0.basis, e0.coord_map, e0.coord_bias,
                  e1.basis, e1.coord_map, e1.coord_bias};
        NodeId hrow = t.constant(Tensor({1, d}, h.data));
        NodeId alpha = route_node(t, rn, hrow);
        NodeId out = t.add(hrow, t.add(t.mul(edit_delta_node(t, e0, hrow), t.slice(alpha, 1, 0, 1)),
                                       t.mul(edit_delta_node(t, e1, hrow), t.slice(alpha, 1, 1, 1))));
        return t.sum(t.mul(out, out));
    };
    std::vector<Tensor> params = {router.w1,          router.b1,          router.w2,
                                  router.b2,          edits[0].basis,     edits[0].coord_map,
                                  edits[0].coord_bias, edits[1].basis,    edits[1].coord_map,
                                  edits[1].coord_bias};
    CHECK(grad_check(builder, params, 1e-5) <= 1e-5);
}

TEST_CASE("route and compose reject mismatched shapes") {
    RouterNet r = zero_router(4, 2);
    CHECK_THROWS_AS(route(r, Tensor::vector({1, 2})), ShapeError);
    std::vector<SubspaceEdit> edits = {perturbed_edit(2, 8, 1)};
    CHECK_THROWS_AS(compose(edits, Tensor::vector({0.5, 0.5}), Tensor::zeros({8})), ShapeError);
    CHECK_THROWS_AS(compose(edits, Tensor::vector({0.5}), Tensor::zeros({6})), DimMismatch);
}

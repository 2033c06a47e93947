#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace weightscape;

namespace {

const std::vector<WeightSpace> kFive = {WeightSpace::A, WeightSpace::B, WeightSpace::C, WeightSpace::D,
                                        WeightSpace::E};

struct LinearData {
    Matrix X;
    Vector y;
};

LinearData linear_data(Index T, std::mt19937_64& rng) {
    LinearData d;
    d.X = fixtures::normal_matrix(T, 3, rng);
    d.y = d.X * (Vector(3) << 1.0, 0.5, -0.7).finished() + fixtures::normal_vector(T, rng);
    return d;
}

double coverage(const SelectionResult& r, const LinearData& fresh) {
    const Vector yhat = r.predict(fresh.X);
    const double l = r.half_length();
    int hit = 0;
    for (Index t = 0; t < fresh.y.size(); ++t) hit += std::abs(fresh.y(t) - yhat(t)) <= l;
    return static_cast<double>(hit) / static_cast<double>(fresh.y.size());
}

}  // namespace

TEST(SplitIndices, SizesFollowRemainderRule) {
    const Splits a = split_indices(6, 1);
    EXPECT_EQ(a.train.size(), 2u);
    EXPECT_EQ(a.weight.size(), 2u);
    EXPECT_EQ(a.calibration.size(), 2u);
    const Splits b = split_indices(7, 1);
    EXPECT_EQ(b.train.size(), 3u);
    EXPECT_EQ(b.weight.size(), 2u);
    EXPECT_EQ(b.calibration.size(), 2u);
    EXPECT_THROW(split_indices(5, 1), InputError);
}

TEST(SplitIndices, DeterministicPartition) {
    const Splits a = split_indices(100, 42), b = split_indices(100, 42);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.weight, b.weight);
    EXPECT_EQ(a.calibration, b.calibration);
    std::set<Index> all;
    for (const auto* v : {&a.train, &a.weight, &a.calibration}) all.insert(v->begin(), v->end());
    EXPECT_EQ(all.size(), 100u);
    EXPECT_EQ(*all.begin(), 0);
    EXPECT_EQ(*all.rbegin(), 99);
    EXPECT_NE(split_indices(100, 43).train, a.train);
}

TEST(ConformalQuantile, HandValues) {
    EXPECT_EQ(conformal_quantile({1.0, 2.0, 3.0}, 0.5), 2.0);
    EXPECT_EQ(conformal_quantile({3.0, 1.0, 2.0}, 0.5), 2.0);
    EXPECT_EQ(conformal_quantile({5.0}, 0.5), 5.0);
    EXPECT_TRUE(std::isinf(conformal_quantile({1.0, 2.0, 3.0}, 0.01)));
    EXPECT_THROW(conformal_quantile({}, 0.5), InputError);
    EXPECT_THROW(conformal_quantile({1.0}, 0.0), InputError);
}

TEST(ConformalQuantile, OrderStatisticIndex) {
    // n = 19, alpha = 0.1: k = ceil(20 * 0.9) = 18.
    std::vector<double> r;
    for (int i = 1; i <= 19; ++i) r.push_back(i);
    EXPECT_EQ(conformal_quantile(r, 0.1), 18.0);
    // n = 9, alpha = 0.2: k = ceil(10 * 0.8) = 8.
    EXPECT_EQ(conformal_quantile({9, 8, 7, 6, 5, 4, 3, 2, 1}, 0.2), 8.0);
}

TEST(ConformalQuantile, NonIncreasingInAlpha) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Vector v = fixtures::normal_vector(1 + trial, rng).cwiseAbs();
        const std::vector<double> r(v.data(), v.data() + v.size());
        double prev = std::numeric_limits<double>::infinity();
        for (double a = 0.01; a < 1.0; a += 0.01) {
            const double q = conformal_quantile(r, a);
            EXPECT_LE(q, prev);
            prev = q;
        }
    }
}

TEST(ArgminSpace, EngineeredLengths) {
    std::vector<SpaceOutcome> out(2);
    out[0].space = WeightSpace::A;
    out[0].length = conformal_quantile({1.0, 2.0, 3.0}, 0.5);
    out[0].solution = WeightSolution{};
    out[1].space = WeightSpace::D;
    out[1].length = conformal_quantile({0.5, 0.6, 0.7}, 0.5);
    out[1].solution = WeightSolution{};
    EXPECT_EQ(argmin_space(out), WeightSpace::D);
    EXPECT_EQ(out[1].length, 0.6);
}

TEST(ArgminSpace, TiesFollowFixedOrder) {
    std::vector<SpaceOutcome> out;
    for (WeightSpace s : {WeightSpace::Aprime, WeightSpace::E, WeightSpace::B, WeightSpace::C}) {
        SpaceOutcome o;
        o.space = s;
        o.length = 1.0;
        o.solution = WeightSolution{};
        out.push_back(o);
    }
    EXPECT_EQ(argmin_space(out), WeightSpace::B);
    out[2].solution.reset();  // B failed
    EXPECT_EQ(argmin_space(out), WeightSpace::C);
}

TEST(SelectSpace, ExactCandidateGivesZeroLengthAndPicksA) {
    std::mt19937_64 rng(4);
    Matrix X = fixtures::normal_matrix(60, 2, rng);
    const Vector y = X.col(0);
    const SelectionResult r = select_space(X, y, default_trainer(2), kFive, 0.1, 9);
    for (const auto& [s, l] : r.lengths) EXPECT_LE(l, 1e-10) << to_string(s);
    EXPECT_EQ(r.chosen, WeightSpace::A);
}

TEST(SelectSpace, CoverageOnLinearData) {
    std::mt19937_64 rng(5);
    const LinearData train = linear_data(300, rng);
    const LinearData fresh = linear_data(500, rng);
    const SelectionResult r = select_space(train.X, train.y, default_trainer(3), kFive, 0.1, 7);
    EXPECT_GE(coverage(r, fresh), 0.85);
    EXPECT_EQ(r.half_length(), r.lengths.at(r.chosen));
    for (const auto& o : r.outcomes) EXPECT_GE(o.length, 0.0);
}

TEST(SelectSpace, AverageCoverageOverReplications) {
    double total = 0.0;
    const int reps = 60;
    for (int rep = 0; rep < reps; ++rep) {
        std::mt19937_64 rng(100 + rep);
        const LinearData train = linear_data(150, rng);
        const LinearData fresh = linear_data(200, rng);
        total += coverage(select_space(train.X, train.y, default_trainer(3), kFive, 0.1, rep), fresh);
    }
    EXPECT_GE(total / reps, 0.9 - 0.05);
}

TEST(SelectSpace, Deterministic) {
    std::mt19937_64 rng(6);
    const LinearData d = linear_data(90, rng);
    const auto a = select_space(d.X, d.y, default_trainer(3), kFive, 0.2, 11);
    const auto b = select_space(d.X, d.y, default_trainer(3), kFive, 0.2, 11);
    EXPECT_EQ(a.chosen, b.chosen);
    EXPECT_EQ(a.lengths, b.lengths);
    EXPECT_EQ(a.splits.calibration, b.splits.calibration);
}

TEST(SelectSpace, FailedSpacesAreMarkedAndAllFailingThrows) {
    std::mt19937_64 rng(7);
    Matrix X = fixtures::normal_matrix(60, 2, rng);
    X.col(1) = X.col(0);
    const Vector y = X.col(0) + fixtures::normal_vector(60, rng);
    EXPECT_THROW(select_space(X, y, default_trainer(2), kFive, 0.1, 1), Error);

    // One candidate: E normalizes to +-1 and still fits; A, B, C, D fit too.
    const SelectionResult r = select_space(X.leftCols(1), y, default_trainer(1), kFive, 0.1, 1);
    EXPECT_EQ(r.outcomes.size(), 5u);
}

TEST(SelectSpace, OptionalInterceptSpace) {
    std::mt19937_64 rng(8);
    LinearData d = linear_data(120, rng);
    d.y.array() += 5.0;
    std::vector<WeightSpace> spaces = kFive;
    spaces.push_back(WeightSpace::Aprime);
    const auto r = select_space(d.X, d.y, default_trainer(3), spaces, 0.1, 3);
    EXPECT_EQ(r.outcomes.back().space, WeightSpace::Aprime);
    EXPECT_LT(r.lengths.at(WeightSpace::Aprime), r.lengths.at(WeightSpace::B));
}

#include <gtest/gtest.h>

#include "surrogate/error.hpp"
#include "surrogate/simulator.hpp"

namespace surrogate::sim {
namespace {

TEST(Simulate, MidpointMatchesHandEvaluation) {
    // Independently evaluated from the closed-form model at the range midpoints.
    const auto out = simulate(BuildingParams{}).values();
    const double expected[] = {78.70799999999997, 60.8672, 0.0, 26.23599999999999, 2.8061935999999994, 27.0};
    for (std::size_t i = 0; i < kNumOutputs; ++i) EXPECT_NEAR(out[i], expected[i], 1e-12 * (1.0 + expected[i]));
}

TEST(Simulate, FuelSplitAboveHalf) {
    BuildingParams p;
    p.fuel_mix = 0.75;
    const auto out = simulate(p);
    EXPECT_NEAR(out.heating_gas, out.heating_demand * 0.75 / 0.92, 1e-12);
    EXPECT_NEAR(out.heating_elec, out.heating_demand * 0.25 / 3.0, 1e-12);
}

TEST(Simulate, NoPvWithoutPanels) {
    BuildingParams p;
    p.pv_frac = 0.0;
    EXPECT_EQ(simulate(p).pv_generation, 0.0);
    p.pv_frac = 0.4;
    EXPECT_DOUBLE_EQ(simulate(p).pv_generation, 0.4 * 180.0 * 600.0 / 1000.0);
}

TEST(Simulate, HeatRecoveryNeverRaisesHeating) {
    BuildingParams p;
    double last = INFINITY;
    for (int i = 0; i <= 90; ++i) {
        p.hrv = i / 100.0;
        const double q = simulate(p).heating_demand;
        EXPECT_LE(q, last);
        last = q;
    }
}

TEST(Simulate, PropertiesOverDesignSpace) {
    const Matrix X = lhs_sample(default_space(), 400, 17);
    for (Index i = 0; i < X.rows(); ++i) {
        BuildingParams p = params_from_vector(X.row(i).transpose());
        const auto base = simulate(p);
        for (double v : base.values()) EXPECT_GE(v, 0.0);
        if (base.heating_demand > 0.0 && p.u_wall < 0.99) {
            BuildingParams q = p;
            q.u_wall += 1e-3;
            EXPECT_GE(simulate(q).heating_demand - base.heating_demand, 0.0);
        }
    }
}

TEST(Simulate, OutOfBoundsNamesField) {
    BuildingParams p;
    p.shgc = 0.9;
    try {
        simulate(p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
        EXPECT_NE(e.message().find("shgc"), std::string::npos);
    }
}

TEST(Batch, EqualsRowByRow) {
    const Matrix X = lhs_sample(default_space(), 20, 2);
    const Matrix Y = simulate_batch(X);
    for (Index i = 0; i < X.rows(); ++i) {
        const auto row = simulate(params_from_vector(X.row(i).transpose())).values();
        for (std::size_t o = 0; o < kNumOutputs; ++o) EXPECT_EQ(Y(i, static_cast<Index>(o)), row[o]);
    }
}

TEST(Batch, ErrorCarriesRowIndex) {
    Matrix X = lhs_sample(default_space(), 5, 2);
    X(3, 0) = 7.0;
    try {
        simulate_batch(X);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(e.message().find("row 3"), std::string::npos);
    }
}

TEST(Generate, EmptyRequestKeepsHeader) {
    const Dataset ds = generate_dataset(default_space(), 0, 1);
    EXPECT_EQ(ds.size(), 0);
    EXPECT_EQ(ds.input_names.size(), kNumInputs);
    EXPECT_EQ(ds.output_names.size(), kNumOutputs);
}

TEST(Generate, RowZeroComposesOracles) {
    const Dataset ds = generate_dataset(default_space(), 100, 1);
    const Matrix X = lhs_sample(default_space(), 100, 1);
    EXPECT_EQ(ds.X.row(0), X.row(0));
    const auto out = simulate(params_from_vector(X.row(0).transpose())).values();
    for (std::size_t o = 0; o < kNumOutputs; ++o) EXPECT_EQ(ds.Y(0, static_cast<Index>(o)), out[o]);
    EXPECT_EQ(generate_dataset(default_space(), 100, 1).Y, ds.Y);
}

TEST(Generate, HighDimensionalSpaceSmoke) {
    std::vector<Parameter> ps;
    for (int j = 0; j < 35; ++j) ps.push_back({"p" + std::to_string(j), 0.0, 1.0 + j, ""});
    const DesignSpace space(ps);
    const Matrix X = lhs_sample(space, 64, 5);
    EXPECT_EQ(X.cols(), 35);
    for (Index i = 0; i < X.rows(); ++i) EXPECT_TRUE(space.contains(X.row(i).transpose()));
}

}  // namespace
}  // namespace surrogate::sim

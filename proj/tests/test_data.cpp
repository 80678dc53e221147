#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "helpers.hpp"

using namespace survmpl;

TEST_CASE("classify_censoring covers the four kinds", "[data]") {
    CHECK(classify_censoring(3.0, 3.0) == CensorKind::Event);
    CHECK(classify_censoring(0.0, 5.0) == CensorKind::Left);
    CHECK(classify_censoring(2.0, std::numeric_limits<double>::infinity()) == CensorKind::Right);
    CHECK(classify_censoring(1.0, 4.0) == CensorKind::Interval);

    CHECK_THROWS_AS(classify_censoring(4.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(classify_censoring(0.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(classify_censoring(std::numeric_limits<double>::infinity(),
                                       std::numeric_limits<double>::infinity()),
                    std::invalid_argument);
}

TEST_CASE("near-ties within relative tolerance are events", "[data]") {
    const double t = 7.0;
    CHECK(classify_censoring(t, t * (1.0 + 1e-13)) == CensorKind::Event);
    CHECK(classify_censoring(t, t * (1.0 + 1e-9)) == CensorKind::Interval);
}

TEST_CASE("load_dataset parses rows, sentinels, and reports bad rows", "[data]") {
    std::istringstream in("t_left,t_right,age\n3.0,3.0,1.2\n2.0,inf,0.0\n0.0,5.0,-1.0\n1.0,4.0,2.5\n");
    const Dataset d = load_dataset(in);
    REQUIRE(d.n() == 4);
    REQUIRE(d.p() == 1);
    CHECK(d[0].kind == CensorKind::Event);
    CHECK(d[0].covariates[0] == 1.2);
    CHECK(d[1].kind == CensorKind::Right);
    CHECK(d[2].kind == CensorKind::Left);
    CHECK(d[3].kind == CensorKind::Interval);
    CHECK(d.covariate_names() == std::vector<std::string>{"age"});

    std::istringstream bad("t_left,t_right\n1.0,2.0\n4.0,1.0\n");
    try {
        load_dataset(bad);
        FAIL("expected a parse error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }

    std::istringstream junk("t_left,t_right\nx,2.0\n");
    CHECK_THROWS_AS(load_dataset(junk), std::invalid_argument);

    std::istringstream missing("left,right\n1,2\n");
    CHECK_THROWS_AS(load_dataset(missing), std::invalid_argument);

    std::istringstream empty("t_left,t_right\n");
    CHECK_THROWS_AS(load_dataset(empty), std::invalid_argument);
}

TEST_CASE("empty right endpoint and tab delimiters both mean +infinity", "[data]") {
    std::istringstream in("t_left\tt_right\tx\n2.0\t\t0.5\n1.0\t1.0\t0.25\n");
    const Dataset d = load_dataset(in);
    REQUIRE(d.n() == 2);
    CHECK(d[0].kind == CensorKind::Right);
    CHECK(std::isinf(d[0].t_right));
    CHECK(d[1].kind == CensorKind::Event);
}

TEST_CASE("schema selects covariate columns by name", "[data]") {
    std::istringstream in("id,t_left,t_right,a,b\n9,1.0,1.0,0.5,0.7\n8,2.0,inf,0.1,0.2\n");
    DataSchema schema;
    schema.covariate_cols = {"b"};
    const Dataset d = load_dataset(in, schema);
    REQUIRE(d.p() == 1);
    CHECK(d[0].covariates[0] == 0.7);
}

TEST_CASE("all-right-censored data are rejected as unidentifiable", "[data]") {
    std::istringstream in("t_left,t_right\n1.0,inf\n2.0,inf\n");
    CHECK_THROWS_AS(load_dataset(in), std::invalid_argument);
}

TEST_CASE("time_support excludes left-censoring zeros and +infinity", "[data]") {
    std::istringstream in("t_left,t_right\n3.0,3.0\n2.0,inf\n1.0,4.0\n");
    const auto [a, b] = time_support(load_dataset(in));
    CHECK(a == 1.0);
    CHECK(b == 4.0);

    std::istringstream in2("t_left,t_right\n0.0,5.0\n2.0,2.0\n");
    const auto [a2, b2] = time_support(load_dataset(in2));
    CHECK(a2 == 2.0);
    CHECK(b2 == 5.0);

    std::istringstream in3("t_left,t_right\n7.0,7.0\n");
    const auto [a3, b3] = time_support(load_dataset(in3));
    CHECK(a3 == 7.0);
    CHECK(b3 == 7.0);
}

TEST_CASE("serialize round trips through load_dataset", "[data]") {
    Rng rng(101);
    const Dataset d = testutil::random_dataset(rng, 60, 3);
    std::ostringstream out;
    serialize(d, out);
    std::istringstream back(out.str());
    const Dataset d2 = load_dataset(back);
    REQUIRE(d2.n() == d.n());
    REQUIRE(d2.p() == d.p());
    for (std::size_t i = 0; i < d.n(); ++i) {
        CHECK(d2[i].kind == d[i].kind);
        CHECK(d2[i].t_left == d[i].t_left);
        if (d[i].kind != CensorKind::Right) CHECK(d2[i].t_right == d[i].t_right);
        CHECK(d2[i].covariates == d[i].covariates);
    }
}

TEST_CASE("every loaded observation satisfies the endpoint invariants", "[data][property]") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        const Dataset d = testutil::random_dataset(rng, 40, 2);
        for (const auto& o : d.observations()) {
            CHECK(o.kind == classify_censoring(o.t_left, o.t_right));
            switch (o.kind) {
                case CensorKind::Event: CHECK(o.t_left == o.t_right); break;
                case CensorKind::Left: CHECK(o.t_left == 0.0); break;
                case CensorKind::Right: CHECK(std::isinf(o.t_right)); break;
                case CensorKind::Interval:
                    CHECK(o.t_left > 0.0);
                    CHECK(o.t_right > o.t_left);
                    CHECK(std::isfinite(o.t_right));
                    break;
            }
        }
    }
}

TEST_CASE("endpoint pool is the sorted positive finite endpoint multiset", "[data]") {
    std::istringstream in("t_left,t_right\n3.0,3.0\n2.0,inf\n0.0,5.0\n1.0,4.0\n");
    const Dataset d = load_dataset(in);
    const auto pool = endpoint_pool(d);
    // events contribute once, interval endpoints twice, left-censoring zero
    // and the +infinity sentinel are dropped
    CHECK(pool == std::vector<double>{1.0, 2.0, 3.0, 4.0, 5.0});
}

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "bpn/metrics.hpp"

using namespace bpn;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("summary arithmetic") {
    SECTION("single task has zero forgetting by convention") {
        AccuracyMatrix m;
        m.acc = {{0.87}};
        Summary s = summarize(m);
        REQUIRE(s.avg_final == 0.87);
        REQUIRE(s.avg_forgetting == 0.0);
    }
    SECTION("constant columns have zero forgetting") {
        AccuracyMatrix m;
        m.acc = {{0.8}, {0.8, 0.9}, {0.8, 0.9, 0.7}};
        REQUIRE(summarize(m).avg_forgetting == 0.0);
    }
    SECTION("worked 2x2 example") {
        AccuracyMatrix m;
        m.acc = {{0.9}, {0.5, 0.95}};
        Summary s = summarize(m);
        REQUIRE(s.avg_final == Catch::Approx(0.725).epsilon(1e-15));
        REQUIRE(s.avg_forgetting == Catch::Approx(0.4).epsilon(1e-15));
    }
    SECTION("empty matrix is an input error") {
        REQUIRE_THROWS_AS(summarize(AccuracyMatrix{}), InputError);
    }
}

TEST_CASE("heatmap of a constant network is uniform at 1/classes") {
    NetworkConfig nc;
    nc.layer_sizes = {2, 8, 4};
    Network net = make_network(nc, 1);
    for (auto& l : net.layers) {
        l.W.fill(0.0);
        l.bias.fill(0.0);
    }
    Matrix grid = heatmap_grid(net, std::nullopt, HeatmapBounds{}, 16);
    REQUIRE(grid.rows() == 16);
    REQUIRE(grid.cols() == 16);
    for (double v : grid.values()) REQUIRE(v == Catch::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("heatmap values are probabilities and nothing mutates") {
    NetworkConfig nc;
    nc.layer_sizes = {2, 16, 3};
    Network net = make_network(nc, 2);
    const std::uint64_t before = network_checksum(net);
    Matrix grid = heatmap_grid(net, std::nullopt, HeatmapBounds{}, 24);
    for (double v : grid.values()) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
    REQUIRE(network_checksum(net) == before);
}

TEST_CASE("heatmap rejects bad inputs") {
    NetworkConfig nc;
    nc.layer_sizes = {3, 4, 2};
    Network net = make_network(nc, 3);
    REQUIRE_THROWS_AS(heatmap_grid(net, std::nullopt, HeatmapBounds{}, 10), ConfigError);
    NetworkConfig nc2;
    nc2.layer_sizes = {2, 4, 2};
    Network net2 = make_network(nc2, 3);
    REQUIRE_THROWS_AS(heatmap_grid(net2, std::nullopt, HeatmapBounds{}, 1), ConfigError);
}

TEST_CASE("heatmap cell centers are sampled") {
    // a linear model p(class0) = softmax(x)[0]: compare one cell against a
    // direct evaluation at its center
    NetworkConfig nc;
    nc.layer_sizes = {2, 2};
    Network net = make_network(nc, 4);
    HeatmapBounds b{0.0, 1.0, 0.0, 1.0};
    Matrix grid = heatmap_grid(net, std::nullopt, b, 4);
    Matrix point(1, 2);
    point(0, 0) = 0.125 + 2 * 0.25; // column 2 center
    point(0, 1) = 0.125 + 1 * 0.25; // row 1 center
    Matrix p = softmax_rows(network_forward(net, point));
    REQUIRE(grid(1, 2) == p(0, 0));
}

TEST_CASE("csv writer emits deterministic files that round-trip") {
    RunRecord rec;
    rec.run_id = "deadbeef";
    rec.method = "bd_ewc";
    rec.seed = 5;
    rec.dataset = "toy";
    rec.config_digest = "deadbeef";
    rec.config_text = "run.seed=5\n";
    rec.matrix.acc = {{0.9123456789012345}, {0.5, 1.0 / 3.0}};
    EpochStat e;
    e.task_trained = 0;
    e.epoch = 1;
    e.task_evaluated = 0;
    e.split = "train";
    e.loss = 0.6931471805599453;
    e.accuracy = 0.75;
    rec.epochs = {e};
    rec.params_base = 42;
    rec.params_memory_per_task = 7;
    rec.task_count = 2;
    Matrix hm(2, 2, {0.1, 0.2, 0.3, 0.4});
    rec.heatmaps[0] = hm;

    const auto dir = (std::filesystem::temp_directory_path() / "bpn_metrics_test").string();
    std::filesystem::remove_all(dir);
    auto paths = write_csv(rec, dir);
    REQUIRE(paths.size() == 4);

    // byte-determinism
    const std::string epochs1 = slurp(dir + "/epochs.csv");
    const std::string matrix1 = slurp(dir + "/matrix.csv");
    write_csv(rec, dir);
    REQUIRE(slurp(dir + "/epochs.csv") == epochs1);
    REQUIRE(slurp(dir + "/matrix.csv") == matrix1);

    // decimal round trip at 17 significant digits
    AccuracyMatrix back = read_matrix_csv(dir + "/matrix.csv");
    REQUIRE(back.acc == rec.matrix.acc);

    // heatmap file holds the grid row-major
    const std::string hm_text = slurp(dir + "/heatmap_0.csv");
    REQUIRE(hm_text.find("0.1") == 0);

    // run.json carries the metadata
    const std::string js = slurp(dir + "/run.json");
    REQUIRE(js.find("\"schema_version\": 1") != std::string::npos);
    REQUIRE(js.find("\"config_digest\": \"deadbeef\"") != std::string::npos);
    REQUIRE(js.find("\"base\": 42") != std::string::npos);
}

TEST_CASE("empty run still writes a header-only epochs.csv") {
    RunRecord rec;
    rec.matrix.acc = {{1.0}};
    const auto dir = (std::filesystem::temp_directory_path() / "bpn_metrics_empty").string();
    std::filesystem::remove_all(dir);
    write_csv(rec, dir);
    REQUIRE(slurp(dir + "/epochs.csv") == "epoch,task_trained,task_evaluated,split,loss,accuracy\n");
}

TEST_CASE("trained toy heatmaps show the right low-probability bands") {
    ClusterSpec spec;
    spec.points_per_cluster = 300;
    spec.seed = 21;
    ClusterData cd = gen_clusters(spec);

    NetworkConfig nc;
    nc.layer_sizes = {2, 64, 64, 3};
    nc.memory_layers = {2};
    nc.memory_k = 64;
    nc.memory_h = 64;
    TrainConfig cfg;
    cfg.seed = 21;
    cfg.epochs = 10;
    cfg.lambda = 10.0;
    cfg.fisher_samples = 300;
    RunOutcome out = run_sequence(cd.dataset, cd.tasks, Method::BdEwc, nc, cfg);

    const HeatmapBounds bounds{};
    const std::size_t res = 50;
    Matrix under_task0 = heatmap_grid(out.nets[0], TaskId{0}, bounds, res);
    Matrix under_task1 = heatmap_grid(out.nets[0], TaskId{1}, bounds, res);

    // mean class-0 probability inside a cluster's 2-sigma disc
    const auto disc_mean = [&](const Matrix& grid, double cx, double cy) {
        const double dx = (bounds.xmax - bounds.xmin) / static_cast<double>(res);
        const double dy = (bounds.ymax - bounds.ymin) / static_cast<double>(res);
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t r = 0; r < res; ++r)
            for (std::size_t c = 0; c < res; ++c) {
                const double x = bounds.xmin + (static_cast<double>(c) + 0.5) * dx;
                const double y = bounds.ymin + (static_cast<double>(r) + 0.5) * dy;
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                if (d2 <= 4.0 * spec.stddev * spec.stddev) {
                    sum += grid(r, c);
                    ++count;
                }
            }
        REQUIRE(count > 0);
        return sum / static_cast<double>(count);
    };

    // under task 0 the red cluster (4,0) must read as not-class-0; under
    // task 1 the light-blue cluster (0,4) must; black (0,0) reads class-0
    // under both
    REQUIRE(disc_mean(under_task0, 4.0, 0.0) < 0.5);
    REQUIRE(disc_mean(under_task1, 0.0, 4.0) < 0.5);
    REQUIRE(disc_mean(under_task0, 0.0, 0.0) > 0.5);
    REQUIRE(disc_mean(under_task1, 0.0, 0.0) > 0.5);
}

TEST_CASE("fmt17 round-trips doubles through text") {
    Rng rng(6);
    for (int i = 0; i < 200; ++i) {
        const double v = rng.next_gaussian() * std::pow(10.0, static_cast<double>(i % 13) - 6);
        REQUIRE(std::stod(fmt17(v)) == v);
    }
}

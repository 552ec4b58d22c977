#include <doctest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "vfcn/data.hpp"
#include "vfcn/model.hpp"
#include "vfcn/network_spec.hpp"
#include "vfcn/phantom.hpp"
#include "vfcn/trainer.hpp"
#include "vfcn/weights.hpp"

using namespace vfcn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> cells;
    std::stringstream s(line);
    for (std::string cell; std::getline(s, cell, ',');)
        cells.push_back(cell);
    return cells;
}

}  // namespace

TEST_CASE("default network overfits a single phantom")
{
    PhantomSpec ps;
    ps.count = 1;
    ps.seed = 21;
    std::vector<RawCase> raws{generate(ps)[0].raw};
    DatasetConfig dc;
    dc.train = true;
    const auto all = build_dataset(raws, dc).samples;
    REQUIRE(!all.empty());
    const std::vector<Sample> one{all.front()};

    const NetworkSpec spec = default_spec(2, 1);
    TrainConfig cfg;
    cfg.max_iter = 300;
    cfg.seed = 21;
    const auto result = train(spec, init_xavier(spec, cfg.seed), one, cfg);
    const double first = result.report.iterations.front().loss;
    const double last = result.report.iterations.back().loss;
    CHECK(first / last >= 10);
    CHECK(sample_dice(spec, result.weights, one.front()) >= 0.95);
}

TEST_CASE("command line flow on 32 phantoms")
{
    const auto dir = fs::temp_directory_path() / "vfcn_slow_flow";
    fs::remove_all(dir);
    REQUIRE(run({"phantom", "--out", (dir / "data").string(), "--count", "32", "--seed", "5"}).code == 0);
    const auto manifest = (dir / "data" / "manifest.csv").string();

    const auto t = run({"train", "--manifest", manifest, "--out", (dir / "run").string(), "--max-iter", "300",
                        "--seed", "5"});
    REQUIRE(t.code == 0);
    const auto at = t.out.find("final dev Dice: ");
    REQUIRE(at != std::string::npos);
    const std::string dice_text = t.out.substr(at + 16, t.out.find('\n', at) - at - 16);
    REQUIRE(dice_text != "NA");
    CHECK(std::stod(dice_text) >= 0.90);

    const auto p = run({"predict", "--manifest", manifest, "--weights", (dir / "run" / "weights.fcnw").string(),
                        "--out", (dir / "pred").string()});
    REQUIRE(p.code == 0);
    const auto e = run({"evaluate", "--manifest", manifest, "--predictions", (dir / "pred" / "predictions.csv").string(),
                        "--out", (dir / "eval").string()});
    REQUIRE(e.code == 0);

    std::ifstream in(dir / "eval" / "metrics.csv");
    std::string line;
    std::getline(in, line);
    int images = 0;
    while (std::getline(in, line)) {
        const auto cells = split(line);
        if (cells.at(0) == "summary")
            continue;
        ++images;
        INFO(line);
        CHECK(std::stod(cells.at(2)) >= 0.90);
    }
    CHECK(images == 32);
}

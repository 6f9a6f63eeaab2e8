#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

#include "cloaklab/cli.hpp"

using namespace cloaklab;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream o, e;
    const int c = cli::parse_and_dispatch(args, o, e);
    return {c, o.str(), e.str()};
}

fs::path temp_file(const std::string& name, const std::string& content = "") {
    const fs::path p = fs::temp_directory_path() / ("cloaklab_test_" + name);
    if (!content.empty()) std::ofstream(p) << content;
    return p;
}

std::vector<std::string> data_lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string line;
    while (std::getline(is, line))
        if (!line.empty() && line[0] != '#') out.push_back(line);
    return out;
}

} // namespace

TEST_CASE("selftest passes on a healthy build", "[cli]") {
    const auto r = run({"selftest"});
    CHECK(r.code == 0);
    CHECK(r.out.find("[FAIL]") == std::string::npos);
    CHECK(r.out.find("all checks passed") != std::string::npos);
}

TEST_CASE("outputs open with the resolved config and are byte-identical across runs", "[cli]") {
    const std::vector<std::string> args{"region-grid", "--eps", "0.5", "--k-eps", "2", "--re", "-1:1", "--im",
                                        "-1:0.5", "--step", "0.25"};
    const auto a = run(args), b = run(args);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(a.out.rfind("# cloaklab region-grid\n", 0) == 0);
    CHECK(a.out.find("# workers = 1\n") != std::string::npos);
    CHECK(a.out.find("# step = 0.25\n") != std::string::npos);
    const auto rows = data_lines(a.out);
    CHECK(rows.front() == "re_k,im_k,label,uncovered");
    CHECK(rows.size() == 1 + 9 * 7);
    CHECK(a.out.find("-1.0000000000000000e+00,-1.0000000000000000e+00,") != std::string::npos);
}

TEST_CASE("config file values are overridden by flags", "[cli]") {
    const auto cfg = temp_file("grid.toml", "# grid\neps = 0.25\nk_eps = 3.0\nstep = 0.5\nre = \"-1:1\"\nim = \"-1:0\"\n");
    const auto r = run({"region-grid", "--config", cfg.string(), "--eps", "0.3"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("# eps = 0.29999999999999999\n") != std::string::npos);
    CHECK(r.out.find("# k_eps = 3\n") != std::string::npos);
    CHECK(data_lines(r.out).size() == 1 + 5 * 3);

    // the echoed block is itself a valid config
    std::string echoed;
    std::istringstream is(r.out);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line) && line.rfind("# ", 0) == 0)
        if (line.find("determinant_normalization") == std::string::npos) echoed += line.substr(2) + "\n";
    const auto cfg2 = temp_file("echo.toml", echoed);
    const auto again = run({"region-grid", "--config", cfg2.string()});
    CHECK(again.code == 0);
    CHECK(again.out == r.out);
}

TEST_CASE("unknown config keys and bad values are validation errors", "[cli]") {
    const auto cfg = temp_file("bad.toml", "eps = 0.5\nbogus = 1\nalso_bad = \"x\"\n");
    const auto r = run({"region-grid", "--config", cfg.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("bogus") != std::string::npos);
    CHECK(r.err.find("also_bad") != std::string::npos);

    CHECK(run({"region-grid", "--eps", "1.5"}).code == 1);
    CHECK(run({"region-grid", "--re", "2:1"}).code == 1);
    CHECK(run({"teig-scan", "--line", "x=1"}).code == 1);
    CHECK(run({"region-grid", "--workers", "4"}).code == 1);
    CHECK(run({"region-grid", "--frobnicate"}).code == 1);
    CHECK(run({}).code == 1);
    const auto sect = temp_file("sect.toml", "[scatter]\nk = 1\n");
    CHECK(run({"scatter", "--config", sect.string()}).code == 1);
    // a box around the pole of sigma is refused before any root search
    CHECK(run({"teig-roots", "--re", "1.7:2.1", "--im", "-0.6:-0.4"}).code == 1);
}

TEST_CASE("numerical failures exit with status 2", "[cli]") {
    const auto r = run({"ls-check", "--eps", "0.25", "--k-eps", "2.5", "--nodes", "32", "--panel", "16",
                        "--max-norm", "1e-9"});
    CHECK(r.code == 2);
    CHECK(r.err.find("||T||") != std::string::npos);
}

TEST_CASE("teig-scan writes full-precision rows", "[cli]") {
    const auto r = run({"teig-scan", "--n", "7", "--line", "im=-0.47", "--re", "1.7:2.1", "--step", "0.1"});
    REQUIRE(r.code == 0);
    const auto rows = data_lines(r.out);
    REQUIRE(rows.size() == 6);
    CHECK(rows[0] == "n,re_k,im_k,re_f,im_f,abs_f");
    CHECK(rows[1].rfind("7,1.7000000000000000e+00,-4.6999999999999997e-01,", 0) == 0);
}

TEST_CASE("JSON commands emit parseable documents", "[cli]") {
    const auto roots = run({"teig-roots", "--n", "1", "--re", "1.7:1.88", "--im", "-0.6:-0.4"});
    REQUIRE(roots.code == 0);
    const auto j = nlohmann::json::parse(roots.out);
    CHECK(j["config"]["workers"] == "1");
    CHECK(j["modes"][0]["winding"] == 1);
    CHECK(std::abs(j["modes"][0]["roots"][0]["k"][0].get<double>() - 1.8362523829514334) < 1e-10);
    CHECK(j["modes"][0]["max_mirror_mismatch"].get<double>() < 1e-8);

    const auto sc = run({"scatter", "--k", "1", "--far-samples", "8"});
    REQUIRE(sc.code == 0);
    const auto s = nlohmann::json::parse(sc.out);
    CHECK(s["far_field"].size() == 8);
    CHECK(s["norms"]["l2_2_R"].get<double>() > 0.0);

    const auto ls = run({"ls-check", "--eps", "0.25", "--k-eps", "2.5", "--nodes", "64"});
    REQUIRE(ls.code == 0);
    CHECK(nlohmann::json::parse(ls.out)["relative_l2_difference"].get<double>() < 1e-8);
}

TEST_CASE("sweep writes rows, summary and manifest", "[cli]") {
    const auto js = temp_file("sweep.json"), mf = temp_file("manifest.json");
    const auto r = run({"sweep", "--dim", "3", "--k-list", "1", "--t-norm", "false", "--json", js.string(),
                        "--manifest", mf.string()});
    REQUIRE(r.code == 0);
    CHECK(data_lines(r.out).size() == 5);
    const auto sum = nlohmann::json::parse(std::ifstream(js));
    CHECK(sum["fits"][0]["slope"].get<double>() == Catch::Approx(1.0).margin(0.2));
    const auto man = nlohmann::json::parse(std::ifstream(mf));
    CHECK(man["criteria"].size() > 0);
    CHECK(man.contains("pass"));
}

#ifdef CLOAKLAB_CLI_PATH
TEST_CASE("the installed executable reports exit statuses", "[cli]") {
    const std::string exe = CLOAKLAB_CLI_PATH;
    auto status = [&](const std::string& args) {
        const int s = std::system((exe + " " + args + " > /dev/null 2>&1").c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    CHECK(status("selftest") == 0);
    CHECK(status("region-grid --eps 7") == 1);
    CHECK(status("ls-check --eps 0.25 --k-eps 2.5 --nodes 32 --panel 16 --max-norm 1e-9") == 2);
}
#endif

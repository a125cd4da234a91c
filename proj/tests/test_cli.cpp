#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "alloc_tracker.hpp"
#include "cli.hpp"

using namespace pthash;
using namespace pthash::cli;
namespace fs = std::filesystem;

namespace {

struct scratch_dir {
    fs::path path;
    scratch_dir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("pthash_test_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~scratch_dir() { fs::remove_all(path); }
    std::string operator/(std::string const& name) const { return (path / name).string(); }
};

struct outcome {
    int code;
    std::string out, err;
};

outcome run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "pthash");
    std::vector<char const*> argv;
    for (auto const& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = run(int(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

void write_text(std::string const& path, std::string const& text) {
    std::ofstream(path, std::ios::binary) << text;
}

std::vector<std::string> split(std::string const& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    for (std::string p; std::getline(ss, p, sep);) parts.push_back(p);
    return parts;
}

}  // namespace

TEST_CASE("key file parsing") {
    auto a = parse_keys("a\nbb\n\nccc");
    REQUIRE(a.size() == 4);
    CHECK(a[0] == "a");
    CHECK(a[1] == "bb");
    CHECK(a[2] == "");
    CHECK(a[3] == "ccc");
    CHECK(parse_keys("a\nb\n").size() == 2);
    CHECK(parse_keys("").size() == 0);
    CHECK(parse_keys("\n").size() == 1);
    CHECK(parse_keys("x\r\n")[0] == "x\r");
}

TEST_CASE("streamed key files match the in-memory reader") {
    scratch_dir dir;
    std::string long_line(10000, 'q');
    for (std::string text : {std::string(""), std::string("a"), std::string("a\n"), std::string("\n\n"),
                             "k1\nk2\n" + long_line + "\nk4", "x\n" + long_line}) {
        write_text(dir / "k.txt", text);
        auto in_memory = parse_keys(text);
        file_keys streamed(dir / "k.txt", 64);
        CHECK(streamed.size() == in_memory.size());
        std::vector<std::string> got;
        streamed.for_each([&](std::string_view k) { got.emplace_back(k); });
        REQUIRE(got.size() == in_memory.size());
        for (uint64_t i = 0; i != got.size(); ++i) CHECK(got[i] == in_memory[i]);
    }
}

TEST_CASE("generated keys are distinct and reproducible") {
    auto a = generate_keys(100000, 1);
    CHECK(!find_duplicate(a));
    auto b = generate_keys(100000, 1);
    for (uint64_t i = 0; i != a.size(); ++i) REQUIRE(a[i] == b[i]);
    CHECK(a[0].size() == 8);
    CHECK(generate_keys(10, 2)[0] != a[0]);
    uint64_t i = 0;
    generated_keys{1000, 1}.for_each([&](std::string_view k) { REQUIRE(k == a[i++]); });
}

TEST_CASE("duplicates are found with line numbers") {
    auto d = find_duplicate(parse_keys("a\nb\nc\nb\n"));
    REQUIRE(d);
    CHECK(d->first == 2);
    CHECK(d->second == 4);
}

TEST_CASE("build 1000 generated keys gives 703 buckets") {
    scratch_dir dir;
    auto r = run_cli({"build", "--gen", "1000", "--seed", "1", "-c", "7.0", "-o", dir / "f.bin"});
    REQUIRE(r.code == exit_ok);
    auto f = mphf::deserialize(read_file(dir / "f.bin"));
    CHECK(f.num_buckets() == 703);
    CHECK(f.num_keys() == 1000);

    auto lines = split(r.out, '\n');
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == csv_header());
    auto fields = split(lines[1], ',');
    REQUIRE(fields.size() == 11);
    CHECK(fields[0] == "1000");
    CHECK(fields[3] == "dd");
    CHECK(fields[5] == "internal-flat");
    CHECK(std::stod(fields[7]) == doctest::Approx(f.bits_per_key()).epsilon(1e-5));
    CHECK(std::stoull(fields[10]) == f.seed());
}

TEST_CASE("builds are byte-identical across runs") {
    scratch_dir dir;
    for (auto const& extra : std::vector<std::vector<std::string>>{{}, {"--encoder", "ef", "--threads", "3"},
                                                                    {"--partitions", "3"}}) {
        std::vector<std::string> a{"build", "--gen", "5000", "--seed", "2", "-o", dir / "a.bin"};
        std::vector<std::string> b{"build", "--gen", "5000", "--seed", "2", "-o", dir / "b.bin"};
        a.insert(a.end(), extra.begin(), extra.end());
        b.insert(b.end(), extra.begin(), extra.end());
        REQUIRE(run_cli(a).code == exit_ok);
        REQUIRE(run_cli(b).code == exit_ok);
        CHECK(read_file(dir / "a.bin") == read_file(dir / "b.bin"));
    }
}

TEST_CASE("empty key source") {
    scratch_dir dir;
    REQUIRE(run_cli({"build", "--gen", "0", "-o", dir / "e.bin"}).code == exit_ok);
    CHECK(mphf::deserialize(read_file(dir / "e.bin")).num_keys() == 0);
    auto v = run_cli({"verify", "-f", dir / "e.bin", "--gen", "0"});
    CHECK(v.code == exit_ok);
    auto b = run_cli({"bench", "-f", dir / "e.bin", "--gen", "0"});
    CHECK(b.code == exit_ok);
    CHECK(b.out.empty());
    write_text(dir / "empty.txt", "");
    CHECK(run_cli({"verify", "-f", dir / "e.bin", "-i", dir / "empty.txt"}).code == exit_ok);
}

TEST_CASE("verify accepts the build keys and rejects others") {
    scratch_dir dir;
    REQUIRE(run_cli({"build", "--gen", "20000", "--seed", "3", "-o", dir / "f.bin"}).code == exit_ok);
    auto ok = run_cli({"verify", "-f", dir / "f.bin", "--gen", "20000", "--seed", "3"});
    CHECK(ok.code == exit_ok);
    CHECK(ok.out.find("ok") == 0);
    auto bad = run_cli({"verify", "-f", dir / "f.bin", "--gen", "20000", "--seed", "4"});
    CHECK(bad.code == exit_verify_failed);
    CHECK(bad.err.find("both map to") != std::string::npos);
    auto size = run_cli({"verify", "-f", dir / "f.bin", "--gen", "19999", "--seed", "3"});
    CHECK(size.code == exit_verify_failed);
}

TEST_CASE("verify of a key file build") {
    scratch_dir dir;
    write_text(dir / "k.txt", "apple\nbanana\ncherry\n\ndate\nelderberry");
    REQUIRE(run_cli({"build", "-i", dir / "k.txt", "-o", dir / "f.bin", "--encoder", "pc"}).code == exit_ok);
    CHECK(run_cli({"verify", "-f", dir / "f.bin", "-i", dir / "k.txt"}).code == exit_ok);
    auto q = run_cli({"query", "-f", dir / "f.bin", "-i", dir / "k.txt"});
    CHECK(q.code == exit_ok);
    auto values = split(q.out, '\n');
    REQUIRE(values.size() == 6);
    std::vector<bool> seen(6, false);
    for (auto const& v : values) {
        uint64_t x = std::stoull(v);
        REQUIRE(x < 6);
        CHECK(!seen[x]);
        seen[x] = true;
    }
}

TEST_CASE("duplicate keys in a file fail the build with line numbers") {
    scratch_dir dir;
    write_text(dir / "k.txt", "a\nb\nc\nb\n");
    for (bool external : {false, true}) {
        std::vector<std::string> args{"build", "-i", dir / "k.txt", "-o", dir / "f.bin", "--retries", "1"};
        if (external) args.push_back("--external");
        auto r = run_cli(args);
        CHECK(r.code == exit_build_failed);
        CHECK(r.err.find("lines 2 and 4") != std::string::npos);
        CHECK(!fs::exists(dir / "f.bin"));
    }
}

TEST_CASE("invalid flag combinations") {
    scratch_dir dir;
    auto o = dir / "f.bin";
    CHECK(run_cli({"build", "--gen", "10", "-o", o, "--external", "--hem"}).code == exit_usage);
    CHECK(run_cli({"build", "--gen", "10", "-o", o, "--external", "--partitions", "2"}).code == exit_usage);
    CHECK(run_cli({"build", "--gen", "10", "-o", o, "--ram-budget", "100000"}).code == exit_usage);
    CHECK(run_cli({"build", "--gen", "10", "-o", o, "--partitions", "2", "--avg-partition-size", "5"}).code ==
          exit_usage);
    CHECK(run_cli({"build", "--gen", "10", "-o", o, "--encoder", "xx"}).code == exit_usage);
    CHECK(run_cli({"build", "-o", o}).code == exit_usage);
    CHECK(run_cli({"build", "--gen", "10", "-i", "k.txt", "-o", o}).code == exit_usage);
    CHECK(run_cli({"build", "--gen", "10", "-o", o, "-a", "1.5"}).code == exit_usage);
    CHECK(run_cli({"build", "--gen", "10", "-o", o, "--threads", "0"}).code == exit_usage);
    CHECK(run_cli({}).code == exit_usage);
    CHECK(run_cli({"frobnicate"}).code == exit_usage);
    CHECK(run_cli({"build", "--gen", "100000", "-o", o, "--external", "--ram-budget", "1000"}).code == exit_usage);
}

TEST_CASE("I/O failures have their own exit code") {
    scratch_dir dir;
    CHECK(run_cli({"build", "-i", dir / "missing.txt", "-o", dir / "f.bin"}).code == exit_io_failed);
    CHECK(run_cli({"build", "--gen", "10", "-o", dir / "no/such/dir/f.bin"}).code == exit_io_failed);
    CHECK(run_cli({"verify", "-f", dir / "missing.bin", "--gen", "10"}).code == exit_io_failed);
    write_text(dir / "junk.bin", "this is not a function");
    CHECK(run_cli({"verify", "-f", dir / "junk.bin", "--gen", "10"}).code == exit_io_failed);
    CHECK(run_cli({"build", "--gen", "10", "-o", dir / "f.bin", "--external", "--tmp-dir", dir / "nope"}).code ==
          exit_io_failed);
}

TEST_CASE("bench rows and report files") {
    scratch_dir dir;
    auto report = dir / "report.csv";
    REQUIRE(run_cli({"build", "--gen", "30000", "--seed", "5", "-o", dir / "f.bin", "--encoder", "pc",
                     "--report", report})
                .code == exit_ok);
    REQUIRE(run_cli({"build", "--gen", "30000", "--seed", "5", "-o", dir / "h.bin", "--partitions", "4",
                     "--report", report})
                .code == exit_ok);
    auto b = run_cli({"bench", "-f", dir / "f.bin", "--gen", "30000", "--seed", "5", "--report", report});
    REQUIRE(b.code == exit_ok);
    CHECK(b.out.empty());
    REQUIRE(run_cli({"bench", "-f", dir / "h.bin", "--gen", "30000", "--seed", "5", "--repetitions", "2",
                     "--report", report})
                .code == exit_ok);

    std::ifstream in(report);
    std::vector<std::vector<std::string>> rows;
    for (std::string line; std::getline(in, line);) rows.push_back(split(line, ','));
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].size() == 11);
    for (uint64_t i = 1; i != rows.size(); ++i) {
        REQUIRE(rows[i].size() == 11);
        CHECK(rows[i][0] == "30000");
    }
    CHECK(rows[1][5] == "internal-flat");
    CHECK(rows[2][5] == "internal-hem");
    CHECK(rows[3][5] == "lookup-flat");
    CHECK(rows[4][5] == "lookup-hem");
    CHECK(rows[3][6] == "nan");
    // bench recovers the construction parameters and attempt count
    CHECK(std::stod(rows[3][2]) == doctest::Approx(0.94).epsilon(0.001));
    CHECK(std::stod(rows[3][1]) == doctest::Approx(7.0).epsilon(0.001));
    CHECK(rows[3][9] == rows[1][9]);
    CHECK(rows[4][9] == rows[2][9]);
    CHECK(rows[3][7] == rows[1][7]);
    CHECK(std::stod(rows[3][8]) > 0.0);
}

TEST_CASE("external build through the CLI equals the internal one") {
    scratch_dir dir;
    REQUIRE(run_cli({"build", "--gen", "50000", "--seed", "6", "-o", dir / "i.bin"}).code == exit_ok);
    auto e = run_cli({"build", "--gen", "50000", "--seed", "6", "-o", dir / "e.bin", "--external",
                      "--ram-budget", "100000", "--tmp-dir", dir.path.string()});
    REQUIRE(e.code == exit_ok);
    CHECK(e.out.find("external-flat") != std::string::npos);
    CHECK(read_file(dir / "i.bin") == read_file(dir / "e.bin"));
}

TEST_CASE("external build respects the ram budget") {
    scratch_dir dir;
    const uint64_t n = 100000;
    {
        std::ofstream keys(dir / "k.txt", std::ios::binary);
        for (uint64_t i = 0; i != n; ++i) keys << "key-" << i * 7919 << '\n';
    }
    for (uint64_t budget : {uint64_t(150000), uint64_t(1000000)}) {
        for (bool from_file : {false, true}) {
            build_options o;
            if (from_file) {
                o.keys.input = dir / "k.txt";
            } else {
                o.keys.gen = int64_t(n);
            }
            o.output = dir / "f.bin";
            o.external = true;
            o.ram_budget = budget;
            o.tmp_dir = dir.path.string();
            o.report = dir / "r.csv";
            std::ostringstream out, err;
            alloc_tracker::reset_peak();
            const uint64_t base = alloc_tracker::current();
            int code = cmd_build(o, out, err);
            const uint64_t used = alloc_tracker::peak() - base;
            REQUIRE(code == exit_ok);
            auto bytes = read_file(dir / "f.bin");
            MESSAGE("budget " << budget << " peak " << used << " output " << bytes.size());
            CHECK(used <= budget + 16 * 1024);
        }
    }
}

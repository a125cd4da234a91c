#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include "pthash/extmem.hpp"

namespace pthash::cli {

key_set generate_keys(uint64_t n, uint64_t seed) {
    key_set keys;
    keys.reserve(n, 8 * n);
    generated_keys{n, seed}.for_each([&](std::string_view k) { keys.push_back(k); });
    return keys;
}

file_keys::file_keys(std::filesystem::path path, uint64_t buffer_bytes)
    : m_path(std::move(path)), m_buffer_bytes(std::max<uint64_t>(buffer_bytes, 64)) {
    scan([&](std::string_view) { ++m_size; });
}

void file_keys::scan(std::function<void(std::string_view)> const& f) const {
    auto file = open_file(m_path, "rb");
    std::vector<char> buffer(m_buffer_bytes);
    uint64_t filled = 0;
    bool pending = false;  // bytes after the last newline
    while (true) {
        if (filled == buffer.size()) buffer.resize(2 * buffer.size());  // line longer than the buffer
        uint64_t got = read_bytes(file.get(), buffer.data() + filled, buffer.size() - filled, m_path);
        if (got == 0) break;
        filled += got;
        uint64_t begin = 0;
        for (uint64_t i = 0; i != filled; ++i) {
            if (buffer[i] != '\n') continue;
            f(std::string_view(buffer.data() + begin, i - begin));
            begin = i + 1;
        }
        std::memmove(buffer.data(), buffer.data() + begin, filled - begin);
        filled -= begin;
        pending = filled != 0;
    }
    if (pending) f(std::string_view(buffer.data(), filled));
}

key_set parse_keys(std::string_view text) {
    key_set keys;
    uint64_t lines = 0;
    for (char ch : text) lines += ch == '\n';
    keys.reserve(lines + 1, text.size());
    while (!text.empty()) {
        auto end = text.find('\n');
        if (end == std::string_view::npos) {
            keys.push_back(text);
            break;
        }
        keys.push_back(text.substr(0, end));
        text.remove_prefix(end + 1);
    }
    return keys;
}

std::vector<uint8_t> read_file(std::filesystem::path const& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error(path.string(), "cannot open for reading");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw io_error(path.string(), "read failed");
    return bytes;
}

void write_file(std::filesystem::path const& path, std::span<const uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error(path.string(), "cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    out.flush();
    if (!out) throw io_error(path.string(), "write failed");
}

key_set read_key_file(std::filesystem::path const& path) {
    auto bytes = read_file(path);
    return parse_keys(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::optional<std::pair<uint64_t, uint64_t>> find_duplicate(key_set const& keys) {
    std::unordered_map<std::string_view, uint64_t> seen;
    seen.reserve(keys.size());
    for (uint64_t i = 0; i != keys.size(); ++i) {
        auto [it, inserted] = seen.emplace(keys[i], i);
        if (!inserted) return std::pair{it->second + 1, i + 1};
    }
    return std::nullopt;
}

any_function any_function::deserialize(std::span<const uint8_t> bytes) {
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), hem_magic, 8) == 0) {
        return any_function(partitioned_mphf::deserialize(bytes));
    }
    return any_function(mphf::deserialize(bytes));
}

uint64_t any_function::num_keys() const {
    return std::visit([](auto const& f) { return f.num_keys(); }, m_f);
}

double any_function::bits_per_key() const {
    return std::visit([](auto const& f) { return f.bits_per_key(); }, m_f);
}

std::vector<uint8_t> any_function::serialize() const {
    return std::visit([](auto const& f) { return f.serialize(); }, m_f);
}

void any_function::save(std::filesystem::path const& path) const {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw io_error(path.string(), "cannot open for writing");
    stream_writer out{file};
    std::visit([&](auto const& f) { f.write(out); }, m_f);
    file.flush();
    if (!out.ok()) throw io_error(path.string(), "write failed");
}

std::string any_function::encoder() const {
    return std::string(encoder_name(std::visit([](auto const& f) { return f.encoder(); }, m_f)));
}

uint64_t any_function::seed() const {
    return std::visit([](auto const& f) { return f.seed(); }, m_f);
}

namespace {

uint64_t attempts_of(mphf const& f, std::span<const key_hash> hashes) {
    std::vector<bool> hit(f.num_buckets(), false);
    uint64_t attempts = 0;
    for (auto const& kh : hashes) {
        uint64_t b = f.mapper().bucket_of(kh.bucket_hash);
        if (hit[b]) continue;
        hit[b] = true;
        attempts += f.pilots().access(b) + 1;
    }
    return attempts;
}

}  // namespace

uint64_t any_function::pilot_attempts(key_set const& keys) const {
    if (num_keys() == 0) return 0;
    if (auto const* f = std::get_if<mphf>(&m_f)) {
        std::vector<key_hash> hashes;
        hashes.reserve(keys.size());
        for (uint64_t i = 0; i != keys.size(); ++i) hashes.push_back(hash_key(keys[i], f->seed()));
        return attempts_of(*f, hashes);
    }
    auto const& p = std::get<partitioned_mphf>(m_f);
    std::vector<std::vector<key_hash>> parts(p.num_partitions());
    for (uint64_t i = 0; i != keys.size(); ++i) {
        uint64_t j = partition_of(hash_key(keys[i], p.seed()), p.num_partitions());
        parts[j].push_back(hash_key(keys[i], p.partitions()[j].seed()));
    }
    uint64_t attempts = 0;
    for (uint64_t j = 0; j != parts.size(); ++j) {
        if (p.partitions()[j].num_keys()) attempts += attempts_of(p.partitions()[j], parts[j]);
    }
    return attempts;
}

double any_function::alpha() const {
    uint64_t n = 0, table = 0;
    if (auto const* f = std::get_if<mphf>(&m_f)) {
        n = f->num_keys();
        table = f->table_size();
    } else {
        for (auto const& f : std::get<partitioned_mphf>(m_f).partitions()) {
            n += f.num_keys();
            table += f.table_size();
        }
    }
    return table ? double(n) / double(table) : std::nan("");
}

double any_function::c() const {
    uint64_t n = num_keys();
    uint64_t m = std::visit([](auto const& f) { return f.num_buckets(); }, m_f);
    if (n <= 1) return std::nan("");
    return double(m) * std::log2(double(n)) / double(n);
}

std::string_view csv_header() {
    return "n,c,alpha,encoder,workers,mode,construction_seconds,bits_per_key,lookup_ns_per_key,"
           "pilot_attempts,seed";
}

std::string csv_row(run_report const& r) {
    std::ostringstream s;
    s.precision(6);
    s << r.n << ',' << r.c << ',' << r.alpha << ',' << r.encoder << ',' << r.workers << ','
      << r.mode << ',' << r.construction_seconds << ',' << r.bits_per_key << ','
      << r.lookup_ns_per_key << ',' << r.pilot_attempts << ',' << r.seed;
    return s.str();
}

double time_lookups(any_function const& f, key_set const& keys, uint64_t repetitions) {
    if (keys.size() == 0 || repetitions == 0) return 0.0;
    uint64_t sink = 0;
    auto start = std::chrono::steady_clock::now();
    for (uint64_t r = 0; r != repetitions; ++r) {
        for (uint64_t i = 0; i != keys.size(); ++i) sink += f.lookup(keys[i]);
    }
    auto elapsed = std::chrono::duration<double, std::nano>(std::chrono::steady_clock::now() - start);
    volatile uint64_t keep = sink;
    (void)keep;
    return elapsed.count() / double(repetitions * keys.size());
}

verify_result verify_function(any_function const& f, key_set const& keys) {
    const uint64_t n = f.num_keys();
    if (n != keys.size()) {
        return {false, "function has " + std::to_string(n) + " keys, key source has " +
                           std::to_string(keys.size())};
    }
    std::vector<uint64_t> owner(n, UINT64_MAX);
    for (uint64_t i = 0; i != n; ++i) {
        uint64_t v = f.lookup(keys[i]);
        if (v >= n) {
            return {false, "key at line " + std::to_string(i + 1) + " maps to " + std::to_string(v) +
                               ", out of range"};
        }
        if (owner[v] != UINT64_MAX) {
            return {false, "keys at lines " + std::to_string(owner[v] + 1) + " and " +
                               std::to_string(i + 1) + " both map to " + std::to_string(v)};
        }
        owner[v] = i;
    }
    return {true, "ok: " + std::to_string(n) + " keys map onto [0, " + std::to_string(n) + ")"};
}

key_set key_source::load() const {
    if (!input.empty()) return read_key_file(input);
    if (gen >= 0) return generate_keys(uint64_t(gen), seed);
    throw std::invalid_argument("one of --input or --gen is required");
}

namespace {

void emit_report(run_report const& r, std::string const& report_path, std::ostream& out) {
    if (report_path.empty()) {
        out << csv_header() << '\n' << csv_row(r) << '\n';
        return;
    }
    std::error_code ec;
    bool fresh = !std::filesystem::exists(report_path, ec) || std::filesystem::file_size(report_path, ec) == 0;
    std::ofstream f(report_path, std::ios::app);
    if (!f) throw io_error(report_path, "cannot open report");
    if (fresh) f << csv_header() << '\n';
    f << csv_row(r) << '\n';
    if (!f) throw io_error(report_path, "write failed");
}

any_function load_function(std::string const& path) { return any_function::deserialize(read_file(path)); }

// Maps library errors onto exit codes.
template <typename Body>
int guarded(std::ostream& err, Body&& body) {
    try {
        return body();
    } catch (build_failure const& e) {
        err << "error: build failed: " << e.what() << '\n';
        return exit_build_failed;
    } catch (io_error const& e) {
        err << "error: " << e.what() << '\n';
        return exit_io_failed;
    } catch (format_error const& e) {
        err << "error: invalid function file: " << e.what() << '\n';
        return exit_io_failed;
    } catch (std::invalid_argument const& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    }
}

template <typename Keys>
any_function build_in_memory(Keys const& keys, build_options const& o, run_report& r) {
    build_config config = o.config;
    if (o.hem || o.partitions) {
        uint64_t r_count = o.partitions ? o.partitions : partitions_for(keys.size(), o.avg_partition_size);
        if (keys.size() > 0) r_count = std::min(r_count, config.buckets_for(keys.size()));
        auto result = build_partitioned(keys, config, r_count);
        r.mode = "internal-hem";
        r.construction_seconds = result.stats.seconds;
        r.pilot_attempts = result.stats.pilot_attempts;
        r.seed = result.stats.seed;
        return any_function(std::move(result.function));
    }
    auto result = build_mphf(keys, config);
    r.mode = "internal-flat";
    r.construction_seconds = result.stats.seconds;
    r.pilot_attempts = result.stats.pilot_attempts;
    r.seed = result.stats.seed;
    return any_function(std::move(result.function));
}

template <typename Keys>
any_function build_external(Keys const& keys, build_options const& o, run_report& r) {
    external_config ext;
    ext.budget.bytes = o.ram_budget;
    if (!o.tmp_dir.empty()) ext.tmp_dir = o.tmp_dir;
    auto result = build_mphf_external(keys, o.config, ext);
    r.mode = "external-flat";
    r.construction_seconds = result.stats.seconds;
    r.pilot_attempts = result.stats.pilot_attempts;
    r.seed = result.stats.seed;
    return any_function(std::move(result.function));
}

}  // namespace

int cmd_build(build_options const& o, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (o.external && (o.hem || o.partitions)) throw std::invalid_argument("--external cannot be combined with HEM");
        if (o.keys.input.empty() && o.keys.gen < 0) {
            throw std::invalid_argument("one of --input or --gen is required");
        }
        build_options opts = o;
        opts.config.encoder = encoder_from_name(o.encoder);

        run_report r;
        r.c = opts.config.c;
        r.alpha = opts.config.alpha;
        r.encoder = o.encoder;
        r.workers = opts.config.workers;
        any_function f;
        try {
            if (o.external) {
                // keys are streamed, never held in memory
                if (!o.keys.input.empty()) {
                    file_keys keys(o.keys.input);
                    r.n = keys.size();
                    f = build_external(keys, opts, r);
                } else {
                    generated_keys keys{uint64_t(o.keys.gen), o.keys.seed};
                    r.n = keys.size();
                    f = build_external(keys, opts, r);
                }
                r.lookup_ns_per_key = std::nan("");
            } else {
                key_set keys = o.keys.load();
                r.n = keys.size();
                f = build_in_memory(keys, opts, r);
                r.lookup_ns_per_key = time_lookups(f, keys, 1);
            }
        } catch (build_failure const& e) {
            if (e.duplicate_keys && !o.keys.input.empty()) {
                if (auto dup = find_duplicate(read_key_file(o.keys.input))) {
                    err << "error: duplicate keys at lines " << dup->first << " and " << dup->second << '\n';
                }
            }
            throw;
        }
        f.save(o.output);
        r.bits_per_key = f.bits_per_key();
        emit_report(r, o.report, out);
        return int(exit_ok);
    });
}

int cmd_query(lookup_options const& o, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        any_function f = load_function(o.function);
        key_set keys = o.keys.load();
        for (uint64_t i = 0; i != keys.size(); ++i) out << f.lookup(keys[i]) << '\n';
        return int(exit_ok);
    });
}

int cmd_verify(lookup_options const& o, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        any_function f = load_function(o.function);
        key_set keys = o.keys.load();
        auto v = verify_function(f, keys);
        (v.ok ? out : err) << v.message << '\n';
        return int(v.ok ? exit_ok : exit_verify_failed);
    });
}

int cmd_bench(lookup_options const& o, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        any_function f = load_function(o.function);
        key_set keys = o.keys.load();
        if (f.num_keys() == 0) return int(exit_ok);
        if (f.num_keys() != keys.size()) {
            err << "error: function has " << f.num_keys() << " keys, key source has " << keys.size() << '\n';
            return int(exit_verify_failed);
        }
        run_report r;
        r.n = f.num_keys();
        r.c = f.c();
        r.alpha = f.alpha();
        r.encoder = f.encoder();
        r.workers = 1;
        r.mode = f.partitioned() ? "lookup-hem" : "lookup-flat";
        r.construction_seconds = std::nan("");
        r.bits_per_key = f.bits_per_key();
        r.lookup_ns_per_key = time_lookups(f, keys, o.repetitions);
        r.pilot_attempts = f.pilot_attempts(keys);
        r.seed = f.seed();
        emit_report(r, o.report, out);
        return int(exit_ok);
    });
}

namespace {

void add_key_source(CLI::App& cmd, key_source& keys) {
    auto* in = cmd.add_option("-i,--input", keys.input, "newline-delimited key file");
    auto* g = cmd.add_option("--gen", keys.gen, "generate this many synthetic 8-byte keys")
                  ->check(CLI::NonNegativeNumber);
    in->excludes(g);
    cmd.add_option("--seed", keys.seed, "seed of the synthetic key generator");
}

void add_lookup_options(CLI::App& cmd, lookup_options& o) {
    add_key_source(cmd, o.keys);
    cmd.add_option("-f,--function", o.function, "function file")->required();
}

}  // namespace

int run(int argc, char const* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Build, query, verify and benchmark minimal perfect hash functions"};
    app.require_subcommand(1);

    build_options b;
    auto* build = app.add_subcommand("build", "build a function from a key source");
    add_key_source(*build, b.keys);
    build->add_option("-c", b.config.c, "bucket density: m = ceil(c n / log2 n)")->capture_default_str();
    build->add_option("-a,--alpha", b.config.alpha, "load factor: n' is about n / alpha")->capture_default_str();
    build->add_option("--encoder", b.encoder, "pilot encoder")
        ->check(CLI::IsMember({"dd", "pc", "ef"}))
        ->capture_default_str();
    build->add_option("--threads", b.config.workers, "workers")->check(CLI::PositiveNumber)->capture_default_str();
    build->add_option("--build-seed", b.config.seed, "seed of the function")->capture_default_str();
    build->add_option("--retries", b.config.retries, "reseeds after a failed try")->capture_default_str();
    build->add_option("--search-limit", b.config.pilot_search_limit, "pilot candidates per bucket")
        ->check(CLI::PositiveNumber);
    build->add_option("-o,--output", b.output, "function file")->required();
    build->add_option("--report", b.report, "append the CSV row here instead of stdout");
    auto* ext = build->add_flag("--external", b.external, "external-memory construction");
    build->add_option("--ram-budget", b.ram_budget, "memory budget in bytes")->needs(ext)->capture_default_str();
    build->add_option("--tmp-dir", b.tmp_dir, "directory for temporary files")->needs(ext);
    auto* hem = build->add_flag("--hem", b.hem, "partitioned construction");
    auto* parts = build->add_option("--partitions", b.partitions, "number of partitions")
                      ->check(CLI::PositiveNumber);
    auto* avg = build->add_option("--avg-partition-size", b.avg_partition_size, "average keys per partition")
                    ->check(CLI::PositiveNumber)
                    ->capture_default_str();
    parts->excludes(avg);
    ext->excludes(hem)->excludes(parts)->excludes(avg);

    lookup_options q, v, m;
    auto* query = app.add_subcommand("query", "print the value of each key, one per line");
    add_lookup_options(*query, q);
    auto* verify = app.add_subcommand("verify", "check that the keys map onto [0, n)");
    add_lookup_options(*verify, v);
    auto* bench = app.add_subcommand("bench", "time lookups of every key");
    add_lookup_options(*bench, m);
    bench->add_option("--repetitions", m.repetitions, "passes over the keys")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    bench->add_option("--report", m.report, "append the CSV row here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const& e) {
        return app.exit(e, out, err) == 0 ? exit_ok : exit_usage;
    }
    if (build->parsed()) {
        b.hem = b.hem || b.partitions || avg->count();
        return cmd_build(b, out, err);
    }
    if (query->parsed()) return cmd_query(q, out, err);
    if (verify->parsed()) return cmd_verify(v, out, err);
    return cmd_bench(m, out, err);
}

}  // namespace pthash::cli

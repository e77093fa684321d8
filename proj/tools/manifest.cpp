#include "manifest.hpp"

#include <array>
#include <fstream>
#include <memory>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "camsim/csv.hpp"
#include "camsim/error.hpp"

namespace camsim::cli {

namespace fs = std::filesystem;

namespace {

struct Hasher {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(), &EVP_MD_CTX_free};

    Hasher()
    {
        if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
    }
    void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx.get(), data, n); }
    std::string hex()
    {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
        std::string out;
        out.reserve(2 * len);
        for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
        return out;
    }
};

}  // namespace

std::string sha256_hex(std::string_view data)
{
    Hasher h;
    h.update(data.data(), data.size());
    return h.hex();
}

std::string file_sha256(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    Hasher h;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

std::string RunManifest::config_digest() const
{
    nlohmann::json j = {{"command", command}, {"config", config}, {"seeds", seeds}};
    // Input paths are not part of the identity, only their bytes.
    auto& in = j["inputs"] = nlohmann::json::array();
    for (const auto& f : inputs) in.push_back(f.sha256);
    return sha256_hex(j.dump());
}

nlohmann::json to_json(const RunManifest& m)
{
    auto files = [](const std::vector<FileDigest>& v) {
        auto a = nlohmann::json::array();
        for (const auto& f : v) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
        return a;
    };
    return {
        {"command", m.command},
        {"config_digest", m.config_digest()},
        {"seeds", m.seeds},
        {"config", m.config},
        {"inputs", files(m.inputs)},
        {"outputs", files(m.outputs)},
        {"tool_version", kToolVersion},
    };
}

void write_manifest(const fs::path& run_dir, RunManifest& m, const std::vector<fs::path>& outputs)
{
    m.outputs.clear();
    for (const auto& p : outputs)
        m.outputs.push_back({fs::relative(p, run_dir).generic_string(), file_sha256(p)});
    csv::write_atomic(run_dir / "manifest.json", to_json(m).dump(2) + "\n");
}

}  // namespace camsim::cli

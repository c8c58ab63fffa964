#include "manifest.hpp"

#include "mehmm/error.hpp"
#include "mehmm/text_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <memory>

namespace mehmm::cli {

using nlohmann::json;

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string() + " for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out.push_back(hex[digest[k] >> 4]);
    out.push_back(hex[digest[k] & 15]);
  }
  return out;
}

InputFile hash_input(std::string role, const std::filesystem::path& path) {
  return InputFile{std::move(role), std::filesystem::absolute(path), sha256_file(path)};
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const std::filesystem::path& dir, const RunManifest& manifest) {
  json inputs = json::array();
  for (const auto& f : manifest.inputs) {
    inputs.push_back({{"role", f.role}, {"path", f.path.string()}, {"sha256", f.sha256}});
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  json outputs = json::array();
  for (const auto& f : files) outputs.push_back({{"file", f.filename().string()}, {"sha256", sha256_file(f)}});
  const json j = {{"tool", "mehmm"},
                  {"version", kVersion},
                  {"command", manifest.command},
                  {"arguments", manifest.arguments},
                  {"config", manifest.config},
                  {"inputs", inputs},
                  {"seeds", manifest.seeds},
                  {"outputs", outputs},
                  {"started", manifest.started},
                  {"finished", utc_now()}};
  text::open_output(dir / "manifest.json") << j.dump(2) << '\n';
}

json read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw InputError(dir.string() + ": no manifest.json");
  try {
    return json::parse(text::open_input(path));
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

}  // namespace mehmm::cli

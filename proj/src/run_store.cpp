#include "kfmt/run_store.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "kfmt/error.hpp"
#include "kfmt/text.hpp"

namespace kfmt {

namespace fs = std::filesystem;

void write_file_atomic(const fs::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::invalid_argument, "cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error(ErrorCode::invalid_argument, "short write " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::invalid_argument, "cannot rename into " + path.string());
}

RunStore::RunStore(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_ / "stages", ec);
  if (ec) throw Error(ErrorCode::config_invalid, "cannot create run dir " + dir_.string());
}

bool RunStore::stage_done(std::string_view stage) const {
  return fs::exists(dir_ / "stages" / (std::string(stage) + ".done"));
}

void RunStore::mark_done(std::string_view stage, const json& info) {
  guard(stage);
  write_file_atomic(dir_ / "stages" / (std::string(stage) + ".done"), info.dump(2) + "\n");
}

void RunStore::guard(std::string_view stage) const {
  if (stage_done(stage)) {
    throw Error(ErrorCode::invalid_argument,
                "stage '" + std::string(stage) + "' is complete and cannot be rewritten");
  }
}

void RunStore::write_jsonl(std::string_view stage, std::string_view name,
                           const std::vector<json>& records) {
  guard(stage);
  std::string text;
  for (const auto& r : records) {
    text += r.dump();
    text += '\n';
  }
  write_file_atomic(path(name), text);
}

void RunStore::write_text(std::string_view stage, std::string_view name, std::string_view text) {
  guard(stage);
  write_file_atomic(path(name), text);
}

bool RunStore::exists(std::string_view name) const { return fs::exists(path(name)); }

std::string RunStore::read_text(std::string_view name) const {
  std::ifstream in(path(name), std::ios::binary);
  if (!in) throw Error(ErrorCode::missing_file, "run store has no " + std::string(name));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<json> RunStore::read_jsonl(std::string_view name) const {
  std::vector<json> out;
  std::size_t line_no = 0;
  for (const auto& line : split(read_text(name), '\n')) {
    ++line_no;
    if (is_blank(line)) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw Error(ErrorCode::schema_violation,
                  std::string(name) + ":" + std::to_string(line_no) + ": invalid JSON");
    }
    out.push_back(std::move(j));
  }
  return out;
}

std::string RunStore::run_name(const fs::path& corpus, std::string_view backend_id,
                               std::string_view timestamp) {
  auto clean = [](std::string_view s) {
    std::string out;
    for (char c : s) {
      bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
      out += ok ? c : '_';
    }
    return out;
  };
  std::string ts;
  for (char c : timestamp) {
    if (c != '-' && c != ':') ts += c;
  }
  return clean(corpus.stem().string()) + "-" + clean(backend_id) + "-" + ts;
}

fs::path RunStore::create_unique(const fs::path& root, const std::string& name) {
  std::error_code ec;
  fs::create_directories(root, ec);
  for (int n = 1; n < 10000; ++n) {
    auto candidate = root / (n == 1 ? name : name + "-" + std::to_string(n));
    if (fs::create_directory(candidate, ec)) return candidate;
    if (ec) break;
  }
  throw Error(ErrorCode::config_invalid, "cannot create a run directory under " + root.string());
}

void RunStore::write_latest(const fs::path& root, const fs::path& run) {
  write_file_atomic(root / "latest", fs::absolute(run).string() + "\n");
}

std::optional<fs::path> RunStore::read_latest(const fs::path& root) {
  std::ifstream in(root / "latest");
  if (!in) return std::nullopt;
  std::string line;
  std::getline(in, line);
  line = trim(line);
  if (line.empty()) return std::nullopt;
  return fs::path(line);
}

}  // namespace kfmt

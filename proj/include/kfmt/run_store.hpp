#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kfmt/types.hpp"

namespace kfmt {

// Directory of one experiment run. Stage outputs are written whole through
// a temporary file and a rename, then sealed by a marker under stages/.
// A sealed stage is never written again.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::filesystem::path path(std::string_view name) const { return dir_ / name; }

  bool stage_done(std::string_view stage) const;
  void mark_done(std::string_view stage, const json& info = json::object());

  // Throws invalid_argument when `name` belongs to a sealed stage.
  void write_jsonl(std::string_view stage, std::string_view name, const std::vector<json>& records);
  void write_text(std::string_view stage, std::string_view name, std::string_view text);

  std::vector<json> read_jsonl(std::string_view name) const;
  std::string read_text(std::string_view name) const;
  bool exists(std::string_view name) const;

  // "<corpus stem>-<backend id>-<YYYYmmddTHHMMSSZ>", unsafe characters replaced.
  static std::string run_name(const std::filesystem::path& corpus, std::string_view backend_id,
                              std::string_view timestamp);
  // A fresh directory under `root`, suffixed -2, -3... on collision.
  static std::filesystem::path create_unique(const std::filesystem::path& root,
                                             const std::string& name);

  // `root/latest` holds the path of the most recent run.
  static void write_latest(const std::filesystem::path& root, const std::filesystem::path& run);
  static std::optional<std::filesystem::path> read_latest(const std::filesystem::path& root);

 private:
  void guard(std::string_view stage) const;

  std::filesystem::path dir_;
};

// Writes `text` to `path` through a temporary sibling and a rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace kfmt

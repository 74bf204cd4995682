#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "pt2i/backends.hpp"
#include "pt2i/remote.hpp"
#include "pt2i/templates.hpp"

namespace pt2i {

/// Directories shipped with the source tree; used when no flag overrides them.
std::filesystem::path default_templates_dir();
std::filesystem::path default_rules_file();

/// Scripted language model over `rules_file`, hashing embedder, stub image
/// generator and key-phrase scorer. Throws ConfigError on a bad rules file.
Backends make_scripted_backends(const std::filesystem::path& rules_file);

/// Remote backends; the scorer is included only when cfg.scorer_url is set.
Backends make_remote_backends(const RemoteConfig& cfg);

std::shared_ptr<const TemplateLibrary> load_templates(const std::filesystem::path& dir);

}  // namespace pt2i

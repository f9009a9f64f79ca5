#pragma once

#include "segfalsify/campaign.hpp"

#include "json.hpp"

#include <string>

namespace segfalsify {

/// Report document. `settings` is stored verbatim under "config"; the only
/// non-reproducible field is "generated_at".
nlohmann::ordered_json report_to_json(const FalsifyReport& report, const Registry& registry,
                                      const nlohmann::ordered_json& settings);

/// Cluster table followed by the perturbation usage matrix, as Markdown.
std::string render_markdown(const nlohmann::ordered_json& report);

/// Copy of the document without the fields that vary between identical runs.
nlohmann::ordered_json strip_volatile(nlohmann::ordered_json report);

nlohmann::ordered_json read_json(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace segfalsify

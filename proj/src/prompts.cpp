#include "mrdrag/prompts.hpp"

#include <regex>

#include "mrdrag/error.hpp"
#include "mrdrag/util.hpp"

namespace mrdrag {

namespace {

struct EmbeddedPrompt {
  const char* name;
  const char* version;
  const char* text;
};

constexpr EmbeddedPrompt kEmbedded[] = {
#include "mrdrag/default_prompts.inc"
};

constexpr std::string_view kUserSeparator = "<<<USER>>>";

std::string substitute(std::string_view text, const std::map<std::string, std::string>& vars,
                       const std::string& template_name) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    const auto close = text.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    out.append(text.substr(pos, open - pos));
    const std::string key(text.substr(open + 2, close - open - 2));
    auto it = vars.find(key);
    if (it == vars.end()) {
      throw Error(ErrorCode::ConfigError, "prompt '" + template_name + "' has no value for {{" + key + "}}");
    }
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

}  // namespace

std::vector<ChatMessage> PromptTemplate::render(const std::map<std::string, std::string>& vars) const {
  std::string_view system_part;
  std::string_view user_part = text;
  if (auto sep = text.find(kUserSeparator); sep != std::string::npos) {
    system_part = std::string_view(text).substr(0, sep);
    user_part = std::string_view(text).substr(sep + kUserSeparator.size());
  }
  std::vector<ChatMessage> messages;
  if (auto sys = trim(substitute(system_part, vars, name)); !sys.empty()) {
    messages.push_back({Role::System, std::move(sys)});
  }
  messages.push_back({Role::User, trim(substitute(user_part, vars, name))});
  return messages;
}

PromptLibrary PromptLibrary::defaults() {
  PromptLibrary lib;
  for (const auto& p : kEmbedded) lib.set(PromptTemplate{p.name, p.version, p.text});
  return lib;
}

const PromptTemplate& PromptLibrary::get(std::string_view name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw Error(ErrorCode::ConfigError, "unknown prompt template '" + std::string(name) + "'");
  return it->second;
}

void PromptLibrary::override_from_file(const std::string& name, const std::filesystem::path& path) {
  if (!templates_.contains(name)) throw Error(ErrorCode::ConfigError, "unknown prompt template '" + name + "'");
  std::string text;
  try {
    text = read_text_file(path.string());
  } catch (const Error&) {
    throw Error(ErrorCode::ConfigError, "cannot read prompt override " + path.string());
  }
  static const std::regex versioned(R"(^[a-z_]+\.(v[0-9]+)\.txt$)");
  std::smatch m;
  const std::string fname = path.filename().string();
  const std::string version = std::regex_match(fname, m, versioned) ? m[1].str() : "custom";
  set(PromptTemplate{name, version, std::move(text)});
}

void PromptLibrary::set(PromptTemplate tmpl) {
  auto name = tmpl.name;
  templates_.insert_or_assign(std::move(name), std::move(tmpl));
}

std::map<std::string, std::string> PromptLibrary::versions() const {
  std::map<std::string, std::string> out;
  for (const auto& [name, t] : templates_) out[name] = t.version;
  return out;
}

}  // namespace mrdrag

#pragma once

// Reader and writer for the EDIF subset used by the pipeline:
//
//   (edif <name> (library <lib> (cell <c> (view <v>
//     (interface (port <p> (direction INPUT|OUTPUT))...)
//     (contents
//       (instance <i> (viewRef <v> (cellRef <KIND>)) (property INIT (string "<hex>"))?)...
//       (net <n> (joined (portRef <pin> (instanceRef <i>)) (portRef <port>)...))...)))))
//
// Keywords are case-insensitive. Cells without contents are treated as
// primitive declarations and skipped; exactly one cell must have contents.

#include <cctype>
#include <charconv>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dmrgnn/error.hpp"
#include "dmrgnn/netlist.hpp"

namespace dmrgnn {

namespace edif_detail {

struct sexpr {
  bool is_list = false;
  bool is_string = false;
  std::string atom;
  int line = 0;
  std::vector<sexpr> items;

  [[nodiscard]] bool is_atom() const { return !is_list; }
};

inline bool atom_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '/';
}

inline sexpr read_document(std::string_view text) {
  std::vector<sexpr> stack;
  std::vector<sexpr> roots;
  int line = 1;
  std::size_t i = 0;
  auto push_item = [&](sexpr item) {
    if (stack.empty())
      roots.push_back(std::move(item));
    else
      stack.back().items.push_back(std::move(item));
  };
  while (i < text.size()) {
    char c = text[i];
    if (c == '\n') {
      ++line;
      ++i;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '(') {
      sexpr list;
      list.is_list = true;
      list.line = line;
      stack.push_back(std::move(list));
      ++i;
    } else if (c == ')') {
      if (stack.empty()) throw error(errc::lex_error, "line " + std::to_string(line) + ": unbalanced ')'");
      sexpr done = std::move(stack.back());
      stack.pop_back();
      push_item(std::move(done));
      ++i;
    } else if (c == '"') {
      std::size_t end = text.find('"', i + 1);
      std::size_t nl = text.find('\n', i + 1);
      if (end == std::string_view::npos || (nl != std::string_view::npos && nl < end))
        throw error(errc::lex_error, "line " + std::to_string(line) + ": unterminated string");
      sexpr s;
      s.is_string = true;
      s.atom = std::string(text.substr(i + 1, end - i - 1));
      s.line = line;
      push_item(std::move(s));
      i = end + 1;
    } else if (atom_char(c)) {
      std::size_t start = i;
      while (i < text.size() && atom_char(text[i])) ++i;
      if (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) && text[i] != '(' &&
          text[i] != ')' && text[i] != '"')
        throw error(errc::lex_error, "line " + std::to_string(line) + ": bad character '" + std::string(1, text[i]) +
                                         "' in token");
      sexpr a;
      a.atom = std::string(text.substr(start, i - start));
      a.line = line;
      push_item(std::move(a));
    } else {
      throw error(errc::lex_error, "line " + std::to_string(line) + ": bad character '" + std::string(1, c) + "'");
    }
  }
  if (!stack.empty())
    throw error(errc::lex_error, "line " + std::to_string(stack.back().line) + ": list opened here is never closed (input ends at line " +
                                     std::to_string(line) + ")");
  if (roots.size() != 1 || !roots.front().is_list)
    throw error(errc::syntax_error, "expected exactly one top-level (edif ...) form");
  return std::move(roots.front());
}

inline bool keyword_is(const sexpr& e, std::string_view kw) {
  if (!e.is_list || e.items.empty() || !e.items.front().is_atom() || e.items.front().is_string) return false;
  const auto& head = e.items.front().atom;
  if (head.size() != kw.size()) return false;
  for (std::size_t i = 0; i < kw.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(head[i])) != std::tolower(static_cast<unsigned char>(kw[i])))
      return false;
  return true;
}

inline bool valid_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s)
    if (!atom_char(c)) return false;
  return true;
}

[[noreturn]] inline void syntax(const sexpr& at, const std::string& msg) {
  throw error(errc::syntax_error, "line " + std::to_string(at.line) + ": " + msg);
}

inline const std::string& name_at(const sexpr& e, std::size_t idx) {
  if (idx >= e.items.size() || !e.items[idx].is_atom() || e.items[idx].is_string ||
      !valid_identifier(e.items[idx].atom))
    syntax(e, "expected identifier");
  return e.items[idx].atom;
}

inline const sexpr* child(const sexpr& e, std::string_view kw) {
  for (const auto& it : e.items)
    if (keyword_is(it, kw)) return &it;
  return nullptr;
}

inline std::uint64_t parse_init(const sexpr& prop, int bits) {
  const sexpr* str = child(prop, "string");
  if (str == nullptr || str->items.size() != 2 || !str->items[1].is_string) syntax(prop, "INIT must be (string \"hex\")");
  std::string hex = str->items[1].atom;
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), value, 16);
  if (hex.empty() || ec != std::errc() || ptr != hex.data() + hex.size()) syntax(prop, "bad INIT value '" + hex + "'");
  if (bits < 64 && (value >> bits) != 0) syntax(prop, "INIT '" + hex + "' exceeds " + std::to_string(bits) + " bits");
  return value;
}

}  // namespace edif_detail

/// Parses an EDIF document into a validated netlist. Cell replica tags are
/// stamped from `rules`. Ignored constructs are reported through `warnings`.
inline netlist parse_edif(std::string_view text, std::span<const prefix_rule> rules,
                          std::vector<std::string>* warnings = nullptr) {
  using namespace edif_detail;
  auto warn = [&](const sexpr& at, const std::string& msg) {
    if (warnings) warnings->push_back("line " + std::to_string(at.line) + ": " + msg);
  };
  sexpr doc = read_document(text);
  if (!keyword_is(doc, "edif")) syntax(doc, "document must start with (edif ...)");

  const sexpr* top = nullptr;
  std::string top_name;
  for (const auto& lib : doc.items) {
    if (!lib.is_list) continue;
    if (!keyword_is(lib, "library") && !keyword_is(lib, "external")) {
      warn(lib, "ignored construct '" + (lib.items.empty() ? std::string() : lib.items.front().atom) + "'");
      continue;
    }
    for (const auto& cell : lib.items) {
      if (!keyword_is(cell, "cell")) continue;
      for (const auto& view : cell.items) {
        if (!keyword_is(view, "view") || child(view, "contents") == nullptr) continue;
        if (top != nullptr) syntax(view, "more than one cell with contents (hierarchy is not supported)");
        top = &view;
        top_name = name_at(cell, 1);
      }
    }
  }
  if (top == nullptr) syntax(doc, "no cell with contents");

  netlist nl;
  nl.name = top_name;
  std::unordered_map<std::string, std::size_t> port_index;
  const sexpr* iface = child(*top, "interface");
  if (iface == nullptr) syntax(*top, "view has no interface");
  for (const auto& p : iface->items) {
    if (!p.is_list) continue;
    if (!keyword_is(p, "port")) {
      warn(p, "ignored interface construct");
      continue;
    }
    const std::string& pname = name_at(p, 1);
    const sexpr* dir = child(p, "direction");
    if (dir == nullptr || dir->items.size() != 2) syntax(p, "port '" + pname + "' lacks a direction");
    std::string d = dir->items[1].atom;
    for (auto& ch : d) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    primary_port port;
    port.name = pname;
    if (d == "INPUT")
      port.direction = port_direction::input;
    else if (d == "OUTPUT")
      port.direction = port_direction::output;
    else
      syntax(*dir, "unsupported direction '" + d + "'");
    port.net = static_cast<net_id>(-1);
    if (!port_index.emplace(pname, nl.ports.size()).second) syntax(p, "duplicate port '" + pname + "'");
    nl.ports.push_back(std::move(port));
  }

  const sexpr& contents = *child(*top, "contents");
  std::unordered_map<std::string, std::size_t> cell_index;
  for (const auto& inst : contents.items) {
    if (!keyword_is(inst, "instance")) continue;
    const std::string& iname = name_at(inst, 1);
    const sexpr* view_ref = child(inst, "viewRef");
    const sexpr* cell_ref = view_ref ? child(*view_ref, "cellRef") : nullptr;
    if (cell_ref == nullptr) syntax(inst, "instance '" + iname + "' lacks (viewRef ... (cellRef ...))");
    const std::string& kname = name_at(*cell_ref, 1);
    auto kind = kind_from_name(kname);
    if (!kind)
      throw error(errc::unknown_primitive,
                  "line " + std::to_string(cell_ref->line) + ": cell type '" + kname + "' of '" + iname + "'");
    cell_instance cell;
    cell.id = iname;
    cell.kind = *kind;
    cell.pins.assign(static_cast<std::size_t>(input_count(*kind) + 1), static_cast<net_id>(-1));
    bool have_init = false;
    for (const auto& prop : inst.items) {
      if (!keyword_is(prop, "property")) continue;
      const std::string& prop_name = name_at(prop, 1);
      std::string upper = prop_name;
      for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      if (upper == "INIT" && is_lut(*kind)) {
        cell.init_mask = parse_init(prop, 1 << input_count(*kind));
        have_init = true;
      } else {
        warn(prop, "ignored property '" + prop_name + "' on '" + iname + "'");
      }
    }
    if (is_lut(*kind) && !have_init) syntax(inst, "LUT instance '" + iname + "' has no INIT");
    if (!cell_index.emplace(iname, nl.cells.size()).second) syntax(inst, "duplicate instance '" + iname + "'");
    nl.cells.push_back(std::move(cell));
  }

  for (const auto& n : contents.items) {
    if (!n.is_list) continue;
    if (keyword_is(n, "instance")) continue;
    if (!keyword_is(n, "net")) {
      warn(n, "ignored contents construct");
      continue;
    }
    const std::string& nname = name_at(n, 1);
    net_id id = static_cast<net_id>(nl.nets.size());
    nl.nets.push_back({nname});
    const sexpr* joined = child(n, "joined");
    if (joined == nullptr) syntax(n, "net '" + nname + "' has no (joined ...)");
    for (const auto& ref : joined->items) {
      if (!ref.is_list) continue;
      if (!keyword_is(ref, "portRef")) syntax(ref, "expected portRef in net '" + nname + "'");
      const std::string& pin = name_at(ref, 1);
      const sexpr* inst_ref = child(ref, "instanceRef");
      net_id* slot = nullptr;
      std::string where;
      if (inst_ref == nullptr) {
        auto it = port_index.find(pin);
        if (it == port_index.end()) syntax(ref, "unknown port '" + pin + "'");
        slot = &nl.ports[it->second].net;
        where = "port '" + pin + "'";
      } else {
        const std::string& iname = name_at(*inst_ref, 1);
        auto it = cell_index.find(iname);
        if (it == cell_index.end()) syntax(*inst_ref, "unknown instance '" + iname + "'");
        auto& cell = nl.cells[it->second];
        auto pidx = pin_index(cell.kind, pin);
        if (!pidx) syntax(ref, "instance '" + iname + "' of type " + std::string(kind_name(cell.kind)) + " has no pin '" + pin + "'");
        slot = &cell.pins[static_cast<std::size_t>(*pidx)];
        where = "pin " + pin + " of '" + iname + "'";
      }
      if (*slot != static_cast<net_id>(-1))
        throw error(errc::multi_driver, "line " + std::to_string(ref.line) + ": " + where + " is joined to more than one net");
      *slot = id;
    }
  }

  for (auto& port : nl.ports)
    if (port.net == static_cast<net_id>(-1)) {
      if (port.direction == port_direction::output)
        throw error(errc::dangling_net, "output port '" + port.name + "' is not connected");
      port.net = static_cast<net_id>(nl.nets.size());
      nl.nets.push_back({port.name});
    }
  for (const auto& cell : nl.cells)
    for (std::size_t p = 0; p < cell.pins.size(); ++p)
      if (cell.pins[p] == static_cast<net_id>(-1))
        throw error(errc::dangling_net, "pin " + std::string(pin_names(cell.kind)[p]) + " of '" + cell.id + "' is not connected");

  bool found_done = false;
  for (std::size_t i = 0; i < nl.ports.size(); ++i)
    if (nl.ports[i].name == "done" && nl.ports[i].direction == port_direction::output) {
      nl.done_port = i;
      found_done = true;
    }
  if (!found_done) throw error(errc::missing_done_port, "design '" + nl.name + "' has no 1-bit output named 'done'");

  apply_prefix_tags(nl, rules);
  validate(nl);
  return nl;
}

inline netlist parse_edif(std::string_view text, std::vector<std::string>* warnings = nullptr) {
  auto rules = default_prefix_rules();
  return parse_edif(text, rules, warnings);
}

/// Writes the netlist in the subset accepted by parse_edif. Output depends
/// only on the netlist contents and order, so it is byte-stable.
inline std::string emit_edif(const netlist& nl) {
  auto ends = connectivity(nl);
  std::ostringstream os;
  os << "(edif " << nl.name << "\n";
  os << "  (library work\n";
  os << "    (cell " << nl.name << "\n";
  os << "      (view netlist\n";
  os << "        (interface\n";
  for (const auto& p : nl.ports)
    os << "          (port " << p.name << " (direction " << (p.direction == port_direction::input ? "INPUT" : "OUTPUT")
       << "))\n";
  os << "        )\n";
  os << "        (contents\n";
  for (const auto& c : nl.cells) {
    os << "          (instance " << c.id << " (viewRef netlist (cellRef " << kind_name(c.kind) << "))";
    if (is_lut(c.kind)) {
      int digits = std::max(1, (1 << input_count(c.kind)) / 4);
      os << " (property INIT (string \"" << to_hex(c.init_mask, digits) << "\"))";
    }
    os << ")\n";
  }
  for (std::size_t n = 0; n < nl.nets.size(); ++n) {
    const auto& e = ends[n];
    os << "          (net " << nl.nets[n].name << " (joined";
    if (e.driver_cell != net_endpoints::none)
      os << " (portRef " << pin_names(nl.cells[e.driver_cell].kind).back() << " (instanceRef "
         << nl.cells[e.driver_cell].id << "))";
    else
      os << " (portRef " << nl.ports[e.driver_port].name << ")";
    for (auto [cell, pin] : e.sinks)
      os << " (portRef " << pin_names(nl.cells[cell].kind)[static_cast<std::size_t>(pin)] << " (instanceRef "
         << nl.cells[cell].id << "))";
    for (auto p : e.sink_ports) os << " (portRef " << nl.ports[p].name << ")";
    os << "))\n";
  }
  os << "        )))))\n";
  return os.str();
}

}  // namespace dmrgnn

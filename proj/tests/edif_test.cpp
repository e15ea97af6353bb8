#include <gtest/gtest.h>

#include "dmrgnn/edif.hpp"
#include "fixtures.hpp"

namespace dmrgnn {
namespace {

constexpr const char* kBufDoc = R"((edif buf_top
  (library work
    (cell buf_top
      (view netlist
        (interface
          (port x (direction INPUT))
          (port y (direction OUTPUT))
          (port done (direction OUTPUT)))
        (contents
          (instance g_buf (viewRef netlist (cellRef BUF)))
          (instance g_one (viewRef netlist (cellRef CONST1)))
          (net x (joined (portRef x) (portRef A (instanceRef g_buf))))
          (net y (joined (portRef Y (instanceRef g_buf)) (portRef y)))
          (net d (joined (portRef Y (instanceRef g_one)) (portRef done))))))))
)";

errc code_of(const std::string& text) {
  try {
    parse_edif(text);
  } catch (const error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected a parse error";
  return errc::io_error;
}

TEST(ParseEdif, MinimalBufDocument) {
  auto nl = parse_edif(kBufDoc);
  EXPECT_EQ(nl.name, "buf_top");
  ASSERT_EQ(nl.cells.size(), 2u);
  EXPECT_EQ(nl.cells[0].kind, primitive_kind::buf);
  EXPECT_EQ(nl.nets.size(), 3u);
  EXPECT_EQ(nl.ports[nl.done_port].name, "done");
  EXPECT_TRUE(equivalent_by_name(nl, parse_edif(emit_edif(nl))));
}

TEST(ParseEdif, TruncatedDocumentIsLexErrorWithLine) {
  std::string doc = "(edif t\n  (library work\n    (cell t (view v (contents\n      (instance g1 (viewRef ... (cellRef AND2";
  try {
    parse_edif(doc);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::lex_error);
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
  std::string unclosed = "(edif t\n  (library work\n    (cell t\n";
  try {
    parse_edif(unclosed);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::lex_error);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_EQ(code_of("(edif t))"), errc::lex_error);
}

TEST(ParseEdif, UnknownPrimitive) {
  std::string doc = kBufDoc;
  doc.replace(doc.find("cellRef BUF"), 11, "cellRef FDRE");
  EXPECT_EQ(code_of(doc), errc::unknown_primitive);
}

TEST(ParseEdif, MultiDriverAndDangling) {
  std::string two_drivers = kBufDoc;
  two_drivers.replace(two_drivers.find("(portRef Y (instanceRef g_one))"), 31,
                      "(portRef Y (instanceRef g_one)) (portRef x)");
  EXPECT_EQ(code_of(two_drivers), errc::multi_driver);

  std::string unconnected = kBufDoc;
  unconnected.replace(unconnected.find("(portRef A (instanceRef g_buf))"), 31, "");
  EXPECT_EQ(code_of(unconnected), errc::dangling_net);
}

TEST(ParseEdif, MissingDone) {
  std::string doc = kBufDoc;
  doc.replace(doc.find("port done"), 9, "port fini");
  doc.replace(doc.find("(portRef done)"), 14, "(portRef fini)");
  EXPECT_EQ(code_of(doc), errc::missing_done_port);
}

TEST(ParseEdif, KeywordsAreCaseInsensitiveAndPropertiesWarn) {
  std::string doc = R"((EDIF t (edifVersion 2 0 0)
  (LIBRARY work (CELL t (VIEW netlist
    (INTERFACE (PORT a (DIRECTION input)) (PORT b (DIRECTION INPUT)) (PORT done (DIRECTION OUTPUT)))
    (CONTENTS
      (INSTANCE l (VIEWREF netlist (CELLREF lut2)) (PROPERTY INIT (STRING "6")) (PROPERTY LOC (STRING "X0Y0")))
      (NET a (JOINED (PORTREF a) (PORTREF I0 (INSTANCEREF l))))
      (NET b (JOINED (PORTREF b) (PORTREF I1 (INSTANCEREF l))))
      (NET o (JOINED (PORTREF O (INSTANCEREF l)) (PORTREF done)))))))))";
  std::vector<std::string> warnings;
  auto nl = parse_edif(doc, &warnings);
  ASSERT_EQ(nl.cells.size(), 1u);
  EXPECT_EQ(nl.cells[0].kind, primitive_kind::lut2);
  EXPECT_EQ(nl.cells[0].init_mask, 0x6u);
  ASSERT_EQ(warnings.size(), 2u);
  EXPECT_NE(warnings[1].find("LOC"), std::string::npos);
}

TEST(ParseEdif, LutWithoutInitOrOversizedInit) {
  std::string doc = R"((edif t (library work (cell t (view v
    (interface (port a (direction INPUT)) (port done (direction OUTPUT)))
    (contents
      (instance l (viewRef v (cellRef LUT2)) INITSLOT)
      (net a (joined (portRef a) (portRef I0 (instanceRef l)) (portRef I1 (instanceRef l))))
      (net o (joined (portRef O (instanceRef l)) (portRef done)))))))))";
  std::string missing = doc;
  missing.replace(missing.find("INITSLOT"), 8, "");
  EXPECT_EQ(code_of(missing), errc::syntax_error);
  std::string wide = doc;
  wide.replace(wide.find("INITSLOT"), 8, "(property INIT (string \"1F\"))");
  EXPECT_EQ(code_of(wide), errc::syntax_error);
}

TEST(ParseEdif, ReplicaTagsFromPrefixes) {
  auto nl = parse_edif(emit_edif(fixtures::mini_dmr()));
  for (const auto& c : nl.cells) {
    if (c.id.starts_with("u_a/")) { EXPECT_EQ(c.tag, replica_tag::a); }
    if (c.id.starts_with("u_b/")) { EXPECT_EQ(c.tag, replica_tag::b); }
    if (c.id == "done_and") { EXPECT_EQ(c.tag, replica_tag::shared); }
  }
}

TEST(EmitEdif, EmptyDesignRoundTrips) {
  auto nl = fixtures::empty_design();
  auto back = parse_edif(emit_edif(nl));
  EXPECT_TRUE(equivalent_by_name(nl, back));
  EXPECT_EQ(emit_edif(back), emit_edif(nl));
}

// Round-trip property over random netlists, including a 1000-cell one
// checked through the name-independent canonical hash.
TEST(EmitEdif, RandomNetlistsRoundTrip) {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    auto nl = fixtures::random_netlist(seed, 20 + seed * 7);
    apply_prefix_tags(nl, default_prefix_rules());
    auto text = emit_edif(nl);
    auto back = parse_edif(text);
    EXPECT_TRUE(equivalent_by_name(nl, back)) << "seed " << seed;
    EXPECT_EQ(canonical_hash(nl), canonical_hash(back)) << "seed " << seed;
    EXPECT_EQ(emit_edif(back), text) << "seed " << seed;
  }
  auto big = fixtures::random_netlist(4242, 1000, 8);
  auto back = parse_edif(emit_edif(big));
  EXPECT_EQ(back.cells.size(), 1000u);
  EXPECT_EQ(canonical_hash(big), canonical_hash(back));
}

}  // namespace
}  // namespace dmrgnn

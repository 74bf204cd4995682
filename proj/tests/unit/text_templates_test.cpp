#include <gtest/gtest.h>

#include "pt2i/errors.hpp"
#include "pt2i/templates.hpp"
#include "pt2i/text.hpp"
#include "test_support.hpp"

namespace pt2i {
namespace {

TEST(Text, NameKeyTrimsAndFolds) {
  EXPECT_EQ(name_key("  Image Style "), "image style");
  EXPECT_TRUE(same_name("Rabbit", "rabbit "));
  EXPECT_FALSE(same_name("rabbit", "rabbits"));
}

TEST(Text, ContainsPhraseRespectsWordBoundaries) {
  EXPECT_TRUE(contains_phrase("The rabbit is white.", "white"));
  EXPECT_TRUE(contains_phrase("Red and White stripes", "red and white"));
  EXPECT_FALSE(contains_phrase("a streetlight", "street"));
  EXPECT_FALSE(contains_phrase("whiteboard", "white"));
  EXPECT_FALSE(contains_phrase("anything", ""));
}

TEST(Text, SplitWordsAndJoin) {
  EXPECT_EQ(split_words("Don't stop, now!"), (std::vector<std::string>{"don", "t", "stop", "now"}));
  EXPECT_EQ(join({"a", "b", "c"}, ", "), "a, b, c");
  EXPECT_EQ(join({}, ", "), "");
}

TEST(Text, FormatNumber) {
  EXPECT_EQ(format_number(0.35), "0.35");
  EXPECT_EQ(format_number(1.0), "1");
  EXPECT_EQ(format_number(1.0 / 12.0), "0.08333");
}

TEST(Text, FnvIsStable) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(PromptTemplate, RendersPlaceholdersAndLiteralBraces) {
  PromptTemplate t("t", "Input: {{\"x\": \"{value}\"}} {not a field} {value}");
  EXPECT_EQ(t.placeholders(), std::set<std::string>{"value"});
  EXPECT_EQ(t.render({{"value", "v"}}), "Input: {\"x\": \"v\"} {not a field} v");
}

TEST(PromptTemplate, MissingOrExtraValuesThrow) {
  PromptTemplate t("t", "{a} and {b}");
  EXPECT_THROW(t.render({{"a", "1"}}), PreconditionError);
  EXPECT_THROW(t.render({{"a", "1"}, {"b", "2"}, {"c", "3"}}), PreconditionError);
}

TEST(TemplateLibrary, ShippedTemplatesHaveExpectedPlaceholders) {
  const TemplateLibrary lib = TemplateLibrary::load(testing::source_dir() / "templates");
  for (TemplateName n : kAllTemplates) EXPECT_EQ(lib.get(n).placeholders(), expected_placeholders(n)) << to_string(n);
}

TEST(TemplateLibrary, RejectsWrongPlaceholders) {
  TemplateLibrary lib;
  EXPECT_THROW(lib.set(TemplateName::kMerge, PromptTemplate("merge", "{prompt} only")), ConfigError);
  EXPECT_THROW(lib.get(TemplateName::kMerge), ConfigError);
}

TEST(TemplateLibrary, MissingDirectoryIsConfigError) {
  testing::TempDir dir;
  EXPECT_THROW(TemplateLibrary::load(dir.path()), ConfigError);
}

}  // namespace
}  // namespace pt2i

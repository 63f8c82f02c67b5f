#pragma once

#include <array>
#include <string>
#include <vector>

namespace testsup {

// One hand-labeled lineage case: the columns and foreign keys a query
// touches, written down by reading the SQL, never by running the extractor.
struct LinkCase {
  int id = 0;
  std::string db;  // california_schools | shop | library
  std::string sql;
  std::vector<std::array<std::string, 2>> columns;  // (table, column)
  std::vector<std::array<std::string, 4>> fks;      // (from_t, from_c, to_t, to_c)
};

// 40 queries over the three fixture schemas: plain filters, joins of every
// supported kind, aliases, stars, scalar/IN/derived subqueries, CTEs, set
// operations, USING, CASE/CAST, quoted identifiers and casing repair.
inline std::vector<LinkCase> link_oracle_cases() {
  const std::array<std::string, 4> fk_frpm = {"frpm", "CDSCode", "schools", "CDSCode"};
  const std::array<std::string, 4> fk_sat = {"satscores", "cds", "schools", "CDSCode"};
  const std::array<std::string, 4> fk_orders = {"orders", "customer_id", "customers", "id"};
  const std::array<std::string, 4> fk_items_o = {"order_items", "order_id", "orders", "id"};
  const std::array<std::string, 4> fk_items_p = {"order_items", "product_id", "products",
                                                 "id"};
  const std::array<std::string, 4> fk_loans = {"loans", "Book Id", "book list", "Book Id"};

  std::vector<LinkCase> cases;

  // california_schools: schools(CDSCode, MailStreet, Charter),
  // frpm(CDSCode, FRPM_Count, School_Type),
  // satscores(cds, AvgScrMath, NumTstTakr, sname).
  cases.push_back({1,
                   "california_schools",
                   "SELECT MailStreet FROM schools WHERE CDSCode = '01'",
                   {{"schools", "CDSCode"}, {"schools", "MailStreet"}},
                   {}});
  cases.push_back({2,
                   "california_schools",
                   "SELECT s.MailStreet FROM schools AS s INNER JOIN frpm AS f "
                   "ON s.CDSCode = f.CDSCode WHERE f.FRPM_Count > 500",
                   {{"schools", "CDSCode"},
                    {"schools", "MailStreet"},
                    {"frpm", "CDSCode"},
                    {"frpm", "FRPM_Count"}},
                   {fk_frpm}});
  cases.push_back({3,
                   "california_schools",
                   "SELECT * FROM schools",
                   {{"schools", "CDSCode"},
                    {"schools", "MailStreet"},
                    {"schools", "Charter"}},
                   {}});
  cases.push_back({4,
                   "california_schools",
                   "SELECT cdscode FROM schools",
                   {{"schools", "CDSCode"}},
                   {}});
  cases.push_back({5,
                   "california_schools",
                   "SELECT COUNT(*) FROM schools WHERE Charter = 1",
                   {{"schools", "Charter"}},
                   {}});
  cases.push_back({6,
                   "california_schools",
                   "SELECT AVG(f.FRPM_Count) FROM frpm f",
                   {{"frpm", "FRPM_Count"}},
                   {}});
  cases.push_back({7,
                   "california_schools",
                   "SELECT sname FROM satscores WHERE cds IN "
                   "(SELECT CDSCode FROM schools WHERE Charter = 1)",
                   {{"satscores", "cds"},
                    {"satscores", "sname"},
                    {"schools", "CDSCode"},
                    {"schools", "Charter"}},
                   {fk_sat}});
  cases.push_back({8,
                   "california_schools",
                   "SELECT CDSCode FROM frpm WHERE FRPM_Count = "
                   "(SELECT MAX(FRPM_Count) FROM frpm)",
                   {{"frpm", "CDSCode"}, {"frpm", "FRPM_Count"}},
                   {}});
  cases.push_back({9,
                   "california_schools",
                   "SELECT d.m FROM (SELECT MAX(AvgScrMath) AS m FROM satscores) d",
                   {{"satscores", "AvgScrMath"}},
                   {}});
  cases.push_back({10,
                   "california_schools",
                   "WITH hi AS (SELECT cds, AvgScrMath FROM satscores "
                   "WHERE AvgScrMath > 500) "
                   "SELECT s.MailStreet FROM schools s JOIN hi ON hi.cds = s.CDSCode",
                   {{"satscores", "cds"},
                    {"satscores", "AvgScrMath"},
                    {"schools", "CDSCode"},
                    {"schools", "MailStreet"}},
                   {fk_sat}});
  cases.push_back({11,
                   "california_schools",
                   "SELECT CDSCode FROM schools WHERE Charter = 1 "
                   "UNION SELECT CDSCode FROM frpm",
                   {{"schools", "CDSCode"},
                    {"schools", "Charter"},
                    {"frpm", "CDSCode"}},
                   {fk_frpm}});
  cases.push_back({12,
                   "california_schools",
                   "SELECT AvgScrMath AS score FROM satscores ORDER BY score DESC "
                   "LIMIT 1",
                   {{"satscores", "AvgScrMath"}},
                   {}});
  cases.push_back({13,
                   "california_schools",
                   "SELECT s.*, f.School_Type FROM schools s, frpm f "
                   "WHERE s.CDSCode = f.CDSCode",
                   {{"schools", "CDSCode"},
                    {"schools", "MailStreet"},
                    {"schools", "Charter"},
                    {"frpm", "CDSCode"},
                    {"frpm", "School_Type"}},
                   {fk_frpm}});
  cases.push_back({14,
                   "california_schools",
                   "SELECT t.sname FROM satscores t JOIN schools s ON t.cds = s.CDSCode "
                   "JOIN frpm f ON f.CDSCode = s.CDSCode "
                   "WHERE f.School_Type = 'High Schools' AND t.NumTstTakr > 50",
                   {{"satscores", "sname"},
                    {"satscores", "cds"},
                    {"satscores", "NumTstTakr"},
                    {"schools", "CDSCode"},
                    {"frpm", "CDSCode"},
                    {"frpm", "School_Type"}},
                   {fk_frpm, fk_sat}});

  // shop: customers(id, name, email, city), products(id, name, price, stock),
  // orders(id, customer_id, placed_on, total),
  // order_items(id, order_id, product_id, quantity).
  cases.push_back({15,
                   "shop",
                   "SELECT name FROM customers WHERE city = 'Paris'",
                   {{"customers", "name"}, {"customers", "city"}},
                   {}});
  cases.push_back({16,
                   "shop",
                   "SELECT email FROM customers ORDER BY name",
                   {{"customers", "email"}, {"customers", "name"}},
                   {}});
  cases.push_back({17,
                   "shop",
                   "SELECT c.name, p.name FROM customers c, products p",
                   {{"customers", "name"}, {"products", "name"}},
                   {}});
  cases.push_back({18,
                   "shop",
                   "SELECT c.city FROM customers c "
                   "JOIN orders o ON o.customer_id = c.id "
                   "JOIN order_items i ON i.order_id = o.id "
                   "JOIN products p ON p.id = i.product_id WHERE p.name = 'Pen'",
                   {{"customers", "city"},
                    {"customers", "id"},
                    {"orders", "customer_id"},
                    {"orders", "id"},
                    {"order_items", "order_id"},
                    {"order_items", "product_id"},
                    {"products", "id"},
                    {"products", "name"}},
                   {fk_orders, fk_items_o, fk_items_p}});
  cases.push_back({19,
                   "shop",
                   "SELECT name FROM customers JOIN orders USING (id)",
                   {{"customers", "name"}, {"customers", "id"}, {"orders", "id"}},
                   {fk_orders}});
  cases.push_back({20,
                   "shop",
                   "SELECT customer_id, COUNT(id) FROM orders GROUP BY customer_id "
                   "HAVING COUNT(id) > 1",
                   {{"orders", "customer_id"}, {"orders", "id"}},
                   {}});
  cases.push_back({21,
                   "shop",
                   "SELECT customer_id, SUM(total) AS spent FROM orders "
                   "GROUP BY customer_id HAVING spent > 10",
                   {{"orders", "customer_id"}, {"orders", "total"}},
                   {}});
  cases.push_back({22,
                   "shop",
                   "SELECT name FROM customers c WHERE EXISTS "
                   "(SELECT 1 FROM orders o WHERE o.customer_id = c.id)",
                   {{"customers", "name"},
                    {"customers", "id"},
                    {"orders", "customer_id"}},
                   {fk_orders}});
  cases.push_back({23,
                   "shop",
                   "SELECT name FROM products WHERE id NOT IN "
                   "(SELECT product_id FROM order_items)",
                   {{"products", "name"},
                    {"products", "id"},
                    {"order_items", "product_id"}},
                   {fk_items_p}});
  cases.push_back({24,
                   "shop",
                   "SELECT CASE WHEN stock = 0 THEN 'out' ELSE 'in' END FROM products",
                   {{"products", "stock"}},
                   {}});
  cases.push_back({25,
                   "shop",
                   "SELECT price * stock FROM products WHERE price BETWEEN 1 AND 10",
                   {{"products", "price"}, {"products", "stock"}},
                   {}});
  cases.push_back({26,
                   "shop",
                   "SELECT CAST(total AS INTEGER) FROM orders "
                   "WHERE placed_on LIKE '2024-01%'",
                   {{"orders", "total"}, {"orders", "placed_on"}},
                   {}});
  cases.push_back({27,
                   "shop",
                   "SELECT t.cnt FROM (SELECT customer_id, COUNT(*) AS cnt "
                   "FROM orders GROUP BY customer_id) t WHERE t.cnt > 1",
                   {{"orders", "customer_id"}},
                   {}});
  cases.push_back({28,
                   "shop",
                   "WITH buyers AS (SELECT DISTINCT customer_id FROM orders), "
                   "named AS (SELECT c.name FROM customers c "
                   "JOIN buyers b ON b.customer_id = c.id) "
                   "SELECT name FROM named",
                   {{"orders", "customer_id"},
                    {"customers", "name"},
                    {"customers", "id"}},
                   {fk_orders}});
  cases.push_back({29,
                   "shop",
                   "SELECT name FROM customers UNION SELECT name FROM products",
                   {{"customers", "name"}, {"products", "name"}},
                   {}});
  cases.push_back({30,
                   "shop",
                   "SELECT a.id FROM orders a JOIN orders b "
                   "ON a.customer_id = b.customer_id AND a.id != b.id",
                   {{"orders", "id"}, {"orders", "customer_id"}},
                   {}});

  // library: "book list"(Book Id, Title, Publish Year, Shelf),
  // loans(Loan Id, Book Id, Member Name, Due Date).
  cases.push_back({31,
                   "library",
                   "SELECT Title FROM \"book list\" WHERE \"Publish Year\" > 1900",
                   {{"book list", "Title"}, {"book list", "Publish Year"}},
                   {}});
  cases.push_back({32,
                   "library",
                   "SELECT b.Title, l.\"Member Name\" FROM \"book list\" b "
                   "JOIN loans l ON l.\"Book Id\" = b.\"Book Id\"",
                   {{"book list", "Book Id"},
                    {"book list", "Title"},
                    {"loans", "Book Id"},
                    {"loans", "Member Name"}},
                   {fk_loans}});
  cases.push_back({33,
                   "library",
                   "SELECT [Title] FROM [book list] ORDER BY [Publish Year]",
                   {{"book list", "Title"}, {"book list", "Publish Year"}},
                   {}});
  cases.push_back({34,
                   "library",
                   "SELECT `Member Name` FROM loans WHERE `Due Date` < '2024-04-01'",
                   {{"loans", "Member Name"}, {"loans", "Due Date"}},
                   {}});
  cases.push_back({35,
                   "library",
                   "SELECT * FROM loans",
                   {{"loans", "Loan Id"},
                    {"loans", "Book Id"},
                    {"loans", "Member Name"},
                    {"loans", "Due Date"}},
                   {}});
  cases.push_back({36,
                   "library",
                   "SELECT title FROM \"BOOK LIST\"",
                   {{"book list", "Title"}},
                   {}});
  cases.push_back({37,
                   "library",
                   "SELECT Shelf FROM \"book list\" JOIN loans "
                   "ON loans.\"Book Id\" = \"book list\".\"Book Id\" "
                   "WHERE \"Member Name\" = 'Ada'",
                   {{"book list", "Shelf"},
                    {"book list", "Book Id"},
                    {"loans", "Book Id"},
                    {"loans", "Member Name"}},
                   {fk_loans}});
  cases.push_back({38,
                   "library",
                   "SELECT COUNT(\"Loan Id\") FROM loans",
                   {{"loans", "Loan Id"}},
                   {}});
  cases.push_back({39,
                   "library",
                   "SELECT Title FROM \"book list\" WHERE \"Book Id\" IN "
                   "(SELECT \"Book Id\" FROM loans)",
                   {{"book list", "Title"},
                    {"book list", "Book Id"},
                    {"loans", "Book Id"}},
                   {fk_loans}});
  cases.push_back({40, "library", "SELECT 42", {}, {}});

  return cases;
}

}  // namespace testsup

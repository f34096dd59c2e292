use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rusqlite::Connection;
use serde::{Deserialize, Serialize};

use crate::ExecError;

/// `{table: {column: description}}` as shipped next to the database.
pub type Descriptions = BTreeMap<String, BTreeMap<String, String>>;

/// Reads a description file. An empty (or whitespace-only) file means no descriptions.
pub fn load_descriptions(path: &Path) -> Result<Descriptions, ExecError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ExecError::Io { path: path.display().to_string(), source })?;
    if text.trim().is_empty() {
        return Ok(Descriptions::new());
    }
    serde_json::from_str(&text).map_err(|source| ExecError::Json { path: path.display().to_string(), source })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDoc {
    pub name: String,
    pub declared_type: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDoc {
    pub name: String,
    pub columns: Vec<ColumnDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationshipNote {
    pub tables: Vec<String>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaDoc {
    pub tables: Vec<TableDoc>,
    pub relationships: Vec<RelationshipNote>,
}

fn table_columns(conn: &Connection, table: &str) -> Result<Vec<(String, String)>, ExecError> {
    let mut stmt = conn.prepare("SELECT name, type FROM pragma_table_info(?1) ORDER BY cid")?;
    let cols = stmt
        .query_map([table], |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?)))?
        .collect::<Result<Vec<_>, _>>()?;
    Ok(cols)
}

fn user_tables(conn: &Connection) -> Result<Vec<String>, ExecError> {
    let mut stmt = conn.prepare(
        "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name",
    )?;
    let names = stmt.query_map([], |r| r.get::<_, String>(0))?.collect::<Result<_, _>>()?;
    Ok(names)
}

/// Convenience wrapper over [`SchemaDoc::load`] reading descriptions from a file.
pub fn load_schema_doc(
    conn: &Connection,
    descriptions_path: &Path,
    relationships: Vec<RelationshipNote>,
) -> Result<SchemaDoc, ExecError> {
    SchemaDoc::load(conn, &load_descriptions(descriptions_path)?, relationships)
}

impl SchemaDoc {
    /// Merges the live schema with human descriptions.
    ///
    /// Descriptions naming a table or column that does not exist are a hard
    /// error listing every offender as `table.column`. Columns without a
    /// description get an empty one and a warning.
    pub fn load(
        conn: &Connection,
        descriptions: &Descriptions,
        relationships: Vec<RelationshipNote>,
    ) -> Result<SchemaDoc, ExecError> {
        let names = user_tables(conn)?;
        let mut tables = Vec::with_capacity(names.len());
        for name in &names {
            let described = descriptions.get(name);
            let columns = table_columns(conn, name)?
                .into_iter()
                .map(|(col, declared_type)| {
                    let description = described.and_then(|d| d.get(&col)).cloned().unwrap_or_else(|| {
                        tracing::warn!(table = %name, column = %col, "column has no description");
                        String::new()
                    });
                    ColumnDoc { name: col, declared_type, description }
                })
                .collect();
            tables.push(TableDoc { name: name.clone(), columns });
        }

        let mut unknown = Vec::new();
        for (table, cols) in descriptions {
            match tables.iter().find(|t| &t.name == table) {
                None if cols.is_empty() => unknown.push(table.clone()),
                None => unknown.extend(cols.keys().map(|c| format!("{table}.{c}"))),
                Some(t) => unknown.extend(
                    cols.keys().filter(|c| !t.columns.iter().any(|k| &k.name == *c)).map(|c| format!("{table}.{c}")),
                ),
            }
        }
        if !unknown.is_empty() {
            return Err(ExecError::UnknownDescriptions(unknown));
        }

        let missing: BTreeSet<String> = relationships
            .iter()
            .flat_map(|r| r.tables.iter())
            .filter(|t| !names.contains(t))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(ExecError::UnknownRelationshipTables(missing.into_iter().collect()));
        }

        Ok(SchemaDoc { tables, relationships })
    }

    pub fn table(&self, name: &str) -> Option<&TableDoc> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Plain-text listing of every table, one column per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for table in &self.tables {
            out.push_str(&table.render());
            out.push('\n');
        }
        if !self.relationships.is_empty() {
            out.push_str("Relationships:\n");
            for r in &self.relationships {
                let _ = writeln!(out, "- {}", r.note);
            }
        }
        out
    }
}

impl TableDoc {
    pub fn render(&self) -> String {
        let mut out = format!("Table `{}`:\n", self.name);
        for c in &self.columns {
            let ty = if c.declared_type.is_empty() { "ANY" } else { &c.declared_type };
            if c.description.is_empty() {
                let _ = writeln!(out, "- {} ({ty})", c.name);
            } else {
                let _ = writeln!(out, "- {} ({ty}): {}", c.name, c.description);
            }
        }
        out
    }
}

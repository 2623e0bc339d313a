//! Fixtures shared by unit tests.

pub(crate) const HAMBURG: &str = "\
<http://ex/Hamburg> <http://ex/country> <http://ex/Germany> .
<http://ex/Germany> <http://ex/leader> <http://ex/Angela_Merkel> .
<http://ex/Angela_Merkel> <http://ex/birthPlace> <http://ex/Hamburg> .
<http://ex/Hamburg> <http://ex/leader> <http://ex/Peter_Tschentscher> .
<http://ex/Peter_Tschentscher> <http://ex/residence> <http://ex/Hamburg> .
";

//! Compact JSON with every float written as `{:.16e}` (17 significant
//! digits), so reruns can be compared byte for byte.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;

struct FullPrecision;

impl Formatter for FullPrecision {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub(crate) fn to_line<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value.serialize(&mut ser).expect("report types serialize infallibly");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

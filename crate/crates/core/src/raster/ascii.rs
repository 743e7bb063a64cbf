// ESRI ASCII grid:
//
//   ncols         4
//   nrows         3
//   xllcorner     0.0
//   yllcorner     0.0
//   cellsize      1.0
//   NODATA_value  -9999
//   <nrows lines of ncols values, northernmost row first>
//
// `xllcenter`/`yllcenter` are accepted on read; `dx`/`dy` replace `cellsize`
// for anisotropic cells.

use std::fmt::Write as _;
use std::io::{Read, Write};

use super::{GridRaster, DEFAULT_NODATA};
use crate::error::{Error, Result};

impl GridRaster {
    pub fn read_ascii<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::from_ascii_str(&text)
    }

    pub fn from_ascii_str(text: &str) -> Result<Self> {
        let mut ncols = None;
        let mut nrows = None;
        let mut xll = None;
        let mut yll = None;
        let mut centered = (false, false);
        let mut cellsize = None;
        let mut dx = None;
        let mut dy = None;
        let mut nodata = DEFAULT_NODATA;

        let mut lines = text.lines().enumerate().peekable();
        while let Some(&(i, line)) = lines.peek() {
            let mut tokens = line.split_whitespace();
            let Some(key) = tokens.next() else {
                lines.next();
                continue;
            };
            if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
                break;
            }
            let key = key.to_ascii_lowercase();
            let raw = tokens.next().ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("header key '{key}' has no value"),
            })?;
            let num = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("invalid number '{s}' for '{key}'"),
                })
            };
            let int = |s: &str| {
                s.parse::<usize>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("invalid integer '{s}' for '{key}'"),
                })
            };
            match key.as_str() {
                "ncols" => ncols = Some(int(raw)?),
                "nrows" => nrows = Some(int(raw)?),
                "xllcorner" => xll = Some(num(raw)?),
                "yllcorner" => yll = Some(num(raw)?),
                "xllcenter" => {
                    xll = Some(num(raw)?);
                    centered.0 = true;
                }
                "yllcenter" => {
                    yll = Some(num(raw)?);
                    centered.1 = true;
                }
                "cellsize" => cellsize = Some(num(raw)?),
                "dx" => dx = Some(num(raw)?),
                "dy" => dy = Some(num(raw)?),
                "nodata_value" => nodata = num(raw)?,
                other => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("unknown header key '{other}'"),
                    })
                }
            }
            lines.next();
        }

        let missing = |k: &str| Error::Parse {
            line: 0,
            message: format!("missing header key '{k}'"),
        };
        let ncols = ncols.ok_or_else(|| missing("ncols"))?;
        let nrows = nrows.ok_or_else(|| missing("nrows"))?;
        let dx = dx.or(cellsize).ok_or_else(|| missing("cellsize"))?;
        let dy = dy.or(cellsize).ok_or_else(|| missing("cellsize"))?;
        let mut x0 = xll.ok_or_else(|| missing("xllcorner"))?;
        let mut y0 = yll.ok_or_else(|| missing("yllcorner"))?;
        if centered.0 {
            x0 -= 0.5 * dx;
        }
        if centered.1 {
            y0 -= 0.5 * dy;
        }

        let mut values = Vec::with_capacity(ncols * nrows);
        for (i, line) in lines {
            for tok in line.split_whitespace() {
                let v = tok.parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("invalid cell value '{tok}'"),
                })?;
                values.push(v);
            }
        }
        if values.len() != ncols * nrows {
            return Err(Error::Parse {
                line: 0,
                message: format!("expected {} cell values, found {}", ncols * nrows, values.len()),
            });
        }
        Self::new(x0, y0, dx, dy, ncols, nrows, values, nodata)
    }

    pub fn to_ascii_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncols {}", self.ncols);
        let _ = writeln!(out, "nrows {}", self.nrows);
        let _ = writeln!(out, "xllcorner {}", self.x0);
        let _ = writeln!(out, "yllcorner {}", self.y0);
        if self.dx == self.dy {
            let _ = writeln!(out, "cellsize {}", self.dx);
        } else {
            let _ = writeln!(out, "dx {}", self.dx);
            let _ = writeln!(out, "dy {}", self.dy);
        }
        let _ = writeln!(out, "NODATA_value {}", self.nodata);
        for row in self.values.chunks(self.ncols) {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                let v = if v.is_nan() { self.nodata } else { *v };
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_ascii<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(self.to_ascii_string().as_bytes())?;
        Ok(())
    }
}

//! A filesystem jail for the population agent. Every path the model
//! names is validated twice: lexically (no absolute paths, no `..`) and
//! physically (the deepest existing ancestor must canonicalize to
//! somewhere inside the workspace root, which catches symlink escapes).

use std::fs;
use std::path::{Component, Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("path `{path}` rejected: {reason}")]
    Rejected { path: String, reason: String },
    #[error("path `{path}` escapes the workspace")]
    Escape { path: String },
    #[error("i/o at `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl SandboxError {
    fn io(path: &Path, source: std::io::Error) -> SandboxError {
        SandboxError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// A directory tree that relative paths cannot leave.
#[derive(Debug)]
pub struct SandboxedFs {
    root: PathBuf,
    canonical_root: PathBuf,
}

impl SandboxedFs {
    /// Creates the root directory (and parents) if needed and locks the
    /// sandbox to its canonical location.
    pub fn create(root: &Path) -> Result<SandboxedFs, SandboxError> {
        fs::create_dir_all(root).map_err(|e| SandboxError::io(root, e))?;
        let canonical_root = root
            .canonicalize()
            .map_err(|e| SandboxError::io(root, e))?;
        Ok(SandboxedFs {
            root: root.to_path_buf(),
            canonical_root,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Maps a workspace-relative path to a real one, or refuses.
    ///
    /// Rejection is lexical first — empty paths, absolute paths, and any
    /// `..` component never touch the filesystem. The surviving path is
    /// then anchored: its deepest existing ancestor must canonicalize to
    /// a location inside the root, so a symlink planted inside the
    /// workspace cannot redirect writes outside it.
    fn resolve(&self, relative: &str) -> Result<PathBuf, SandboxError> {
        let rejected = |reason: &str| SandboxError::Rejected {
            path: relative.to_string(),
            reason: reason.to_string(),
        };

        if relative.is_empty() {
            return Err(rejected("empty path"));
        }
        let path = Path::new(relative);
        if path.is_absolute() {
            return Err(rejected("absolute path"));
        }
        for component in path.components() {
            match component {
                Component::Normal(_) | Component::CurDir => {}
                Component::ParentDir => return Err(rejected("`..` component")),
                Component::RootDir | Component::Prefix(_) => {
                    return Err(rejected("absolute path"))
                }
            }
        }

        let joined = self.root.join(path);
        let mut anchor = joined.as_path();
        while !anchor.exists() {
            anchor = anchor.parent().ok_or_else(|| rejected("no valid anchor"))?;
        }
        let real = anchor
            .canonicalize()
            .map_err(|e| SandboxError::io(anchor, e))?;
        if !real.starts_with(&self.canonical_root) {
            return Err(SandboxError::Escape {
                path: relative.to_string(),
            });
        }
        Ok(joined)
    }

    /// Writes a file, creating parent directories as needed.
    pub fn write_file(&self, relative: &str, contents: &str) -> Result<(), SandboxError> {
        let target = self.resolve(relative)?;
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(|e| SandboxError::io(parent, e))?;
        }
        fs::write(&target, contents).map_err(|e| SandboxError::io(&target, e))
    }

    pub fn read_file(&self, relative: &str) -> Result<String, SandboxError> {
        let target = self.resolve(relative)?;
        fs::read_to_string(&target).map_err(|e| SandboxError::io(&target, e))
    }

    pub fn exists(&self, relative: &str) -> bool {
        matches!(self.resolve(relative), Ok(p) if p.exists())
    }

    /// Every regular file under the root as a sorted list of relative
    /// paths with `/` separators.
    pub fn list_files(&self) -> Result<Vec<String>, SandboxError> {
        let mut files = Vec::new();
        for entry in walkdir::WalkDir::new(&self.root).sort_by_file_name() {
            let entry = entry.map_err(|e| SandboxError::Io {
                path: self.root.display().to_string(),
                source: e.into(),
            })?;
            if !entry.file_type().is_file() {
                continue;
            }
            let relative = entry
                .path()
                .strip_prefix(&self.root)
                .expect("walk stays under root");
            files.push(relative.to_string_lossy().replace('\\', "/"));
        }
        files.sort();
        Ok(files)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sandbox() -> (tempfile::TempDir, SandboxedFs) {
        let dir = tempfile::tempdir().unwrap();
        let fs = SandboxedFs::create(&dir.path().join("work")).unwrap();
        (dir, fs)
    }

    #[test]
    fn write_read_roundtrip_with_nested_directories() {
        let (_dir, fs) = sandbox();
        fs.write_file("src/pkg/module.py", "x = 1\n").unwrap();
        assert_eq!(fs.read_file("src/pkg/module.py").unwrap(), "x = 1\n");
        assert!(fs.exists("src/pkg/module.py"));
        assert!(!fs.exists("src/pkg/other.py"));
    }

    #[test]
    fn absolute_and_parent_paths_are_rejected_lexically() {
        let (_dir, fs) = sandbox();
        for path in ["/etc/passwd", "../outside.txt", "a/../../b", "src/../..", ""] {
            let err = fs.write_file(path, "x").unwrap_err();
            assert!(
                matches!(err, SandboxError::Rejected { .. }),
                "{path:?} gave {err:?}"
            );
        }
    }

    #[test]
    fn dot_components_are_harmless() {
        let (_dir, fs) = sandbox();
        fs.write_file("./src/./a.py", "pass\n").unwrap();
        assert_eq!(fs.read_file("src/a.py").unwrap(), "pass\n");
    }

    #[test]
    fn symlink_inside_the_workspace_cannot_redirect_writes_outside() {
        let (dir, fs) = sandbox();
        let outside = dir.path().join("outside");
        fs::create_dir(&outside).unwrap();
        std::os::unix::fs::symlink(&outside, fs.root().join("sneaky")).unwrap();

        let err = fs.write_file("sneaky/file.txt", "x").unwrap_err();
        assert!(matches!(err, SandboxError::Escape { .. }), "{err:?}");
        assert!(!outside.join("file.txt").exists());
    }

    #[test]
    fn reads_through_an_escaping_symlink_are_refused_too() {
        let (dir, fs) = sandbox();
        let secret = dir.path().join("secret.txt");
        fs::write(&secret, "hidden").unwrap();
        std::os::unix::fs::symlink(&secret, fs.root().join("peek.txt")).unwrap();

        let err = fs.read_file("peek.txt").unwrap_err();
        assert!(matches!(err, SandboxError::Escape { .. }), "{err:?}");
    }

    #[test]
    fn list_files_is_sorted_and_relative() {
        let (_dir, fs) = sandbox();
        fs.write_file("main.py", "").unwrap();
        fs.write_file("src/b.py", "").unwrap();
        fs.write_file("src/a.py", "").unwrap();
        assert_eq!(
            fs.list_files().unwrap(),
            vec!["main.py", "src/a.py", "src/b.py"]
        );
    }
}
